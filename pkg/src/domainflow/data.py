"""Dataset plumbing: manifests, synthetic style domains, translated-set export.

Synthetic domains are random colored shapes on a near-gray textured
background.  The style parameter applies a global hue rotation (degrees) or
brightness offset plus an optional mild blur, giving a one-dimensional style
axis that the measurement oracles below can read back off the images.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from PIL import Image, ImageDraw
from scipy.ndimage import gaussian_filter

from .domainness import validate_scalar

STYLE_KINDS = ("hue", "brightness")


# -- image tensor <-> PNG -----------------------------------------------------

def tensor_to_image(t: torch.Tensor) -> Image.Image:
    """(3, H, W) tensor in [-1, 1] to an 8-bit RGB image."""
    arr = t.detach().cpu().numpy()
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) tensor, got {tuple(t.shape)}")
    arr = np.clip((arr.transpose(1, 2, 0) + 1.0) * 127.5, 0, 255)
    return Image.fromarray(np.round(arr).astype(np.uint8), "RGB")


def image_to_tensor(img: Image.Image) -> torch.Tensor:
    arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return torch.from_numpy(arr.transpose(2, 0, 1) / 127.5 - 1.0)


def load_image_tensor(path) -> torch.Tensor:
    with Image.open(path) as img:
        return image_to_tensor(img)


def save_image_tensor(t: torch.Tensor, path):
    tensor_to_image(t).save(path, format="PNG")


def load_label_map(path) -> torch.Tensor:
    with Image.open(path) as img:
        return torch.from_numpy(np.asarray(img.convert("L"), dtype=np.int64))


# -- manifests ----------------------------------------------------------------

@dataclass
class ManifestEntry:
    image: str
    label: str | None = None


@dataclass
class DatasetManifest:
    root: Path
    domain: str
    image_size: int
    entries: list = field(default_factory=list)

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def n(self) -> int:
        return len(self.entries)

    def image_paths(self):
        return [self.root / e.image for e in self.entries]

    def label_paths(self):
        return [self.root / e.label if e.label else None for e in self.entries]

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "image_size": self.image_size,
            "entries": [{"image": e.image, "label": e.label} for e in self.entries],
        }

    def save(self, path=None) -> Path:
        path = Path(path) if path else self.root / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=1))
        return path

    def validate(self):
        if self.n < 1:
            raise ValueError(f"manifest for {self.domain!r} lists no images")
        for e in self.entries:
            p = self.root / e.image
            if not p.exists():
                raise FileNotFoundError(f"missing image {p}")
            with Image.open(p) as img:
                if img.size != (self.image_size, self.image_size):
                    raise ValueError(
                        f"{p} decodes to {img.size}, expected "
                        f"({self.image_size}, {self.image_size})"
                    )
            if e.label is not None and not (self.root / e.label).exists():
                raise FileNotFoundError(f"missing label {self.root / e.label}")
        return self


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    doc = json.loads(path.read_text())
    return DatasetManifest(
        root=path.parent,
        domain=doc["domain"],
        image_size=doc["image_size"],
        entries=[ManifestEntry(d["image"], d.get("label")) for d in doc["entries"]],
    )


# -- synthetic domain generation ----------------------------------------------

@dataclass
class SyntheticStyleSpec:
    """Procedural domain: shared geometry seed, one style knob.

    ``theta`` is a hue rotation in degrees for kind='hue' or a brightness
    offset in [-1, 1] for kind='brightness'.  Specs differing only in theta
    yield pixel-aligned content with identical label maps.
    """

    theta: float
    kind: str = "hue"
    geometry_seed: int = 0
    count: int = 100
    image_size: int = 64
    blur_sigma: float = 0.0
    num_classes: int = 2

    def __post_init__(self):
        if self.kind not in STYLE_KINDS:
            raise ValueError(f"kind must be one of {STYLE_KINDS}")
        if self.kind == "brightness" and not -1.0 <= self.theta <= 1.0:
            raise ValueError("brightness offset must lie in [-1, 1]")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.num_classes not in (2, 3):
            raise ValueError("num_classes must be 2 (shape/bg) or 3 (ellipse/polygon/bg)")


def _draw_content(rng: np.random.Generator, size: int, num_classes: int):
    """Random shapes over a textured near-gray background; returns rgb [0,1] + label."""
    cells = max(4, size // 8)
    texture = rng.uniform(0.35, 0.65, size=(cells, cells))
    bg = np.asarray(
        Image.fromarray((texture * 255).astype(np.uint8), "L").resize(
            (size, size), Image.BILINEAR
        ),
        dtype=np.float64,
    ) / 255.0
    rgb = np.stack([bg, bg, bg], axis=-1)
    # sub-percent channel jitter keeps the background effectively hue-free
    rgb += rng.uniform(-0.008, 0.008, size=rgb.shape)
    rgb = np.clip(rgb, 0.0, 1.0)

    img = Image.fromarray((rgb * 255).astype(np.uint8), "RGB")
    label = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(img)
    draw_label = ImageDraw.Draw(label)

    for _ in range(int(rng.integers(2, 5))):
        cx, cy = rng.uniform(0.2, 0.8, size=2) * size
        r = rng.uniform(0.1, 0.24) * size
        hue = (rng.normal(0.0, 12.0) % 360.0) / 360.0
        sat = rng.uniform(0.7, 0.95)
        val = rng.uniform(0.6, 0.95)
        color = tuple(int(round(c * 255)) for c in hsv_to_rgb([hue, sat, val]))
        if rng.uniform() < 0.5:
            box = [cx - r, cy - r * rng.uniform(0.6, 1.0), cx + r, cy + r]
            draw.ellipse(box, fill=color)
            draw_label.ellipse(box, fill=1)
        else:
            k = int(rng.integers(3, 6))
            angles = np.sort(rng.uniform(0, 2 * np.pi, size=k))
            pts = [
                (cx + r * np.cos(a) * rng.uniform(0.7, 1.0), cy + r * np.sin(a))
                for a in angles
            ]
            draw.polygon(pts, fill=color)
            draw_label.polygon(pts, fill=1 if num_classes == 2 else 2)

    return np.asarray(img, dtype=np.float64) / 255.0, np.asarray(label, dtype=np.uint8)


def _apply_style(rgb: np.ndarray, spec: SyntheticStyleSpec) -> np.ndarray:
    if spec.kind == "hue":
        hsv = rgb_to_hsv(rgb)
        hsv[..., 0] = (hsv[..., 0] + spec.theta / 360.0) % 1.0
        rgb = hsv_to_rgb(hsv)
    else:
        rgb = rgb + spec.theta / 2.0
    if spec.blur_sigma > 0:
        rgb = np.stack(
            [gaussian_filter(rgb[..., c], spec.blur_sigma) for c in range(3)], axis=-1
        )
    return np.clip(rgb, 0.0, 1.0)


def generate_domain(spec: SyntheticStyleSpec, out_dir) -> DatasetManifest:
    """Render one synthetic domain to <out_dir>/{images,labels} plus manifest."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(spec.count):
        rng = np.random.default_rng([spec.geometry_seed, i])
        rgb, label = _draw_content(rng, spec.image_size, spec.num_classes)
        rgb = _apply_style(rgb, spec)
        name = f"{i:05d}.png"
        Image.fromarray(np.round(rgb * 255).astype(np.uint8), "RGB").save(
            out / "images" / name
        )
        Image.fromarray(label, "L").save(out / "labels" / name)
        entries.append(ManifestEntry(f"images/{name}", f"labels/{name}"))
    manifest = DatasetManifest(
        root=out, domain=out.name, image_size=spec.image_size, entries=entries
    )
    manifest.save()
    return manifest


def generate_synthetic_domains(
    spec_source: SyntheticStyleSpec, spec_target: SyntheticStyleSpec, out_dir
):
    """Paired-content source/target domains differing only in style."""
    if spec_source.geometry_seed != spec_target.geometry_seed:
        raise ValueError("source and target specs must share the geometry seed")
    if (spec_source.count, spec_source.image_size) != (
        spec_target.count,
        spec_target.image_size,
    ):
        raise ValueError("source and target specs must agree on count and image size")
    out = Path(out_dir)
    source = generate_domain(spec_source, out / "source")
    target = generate_domain(spec_target, out / "target")
    return source, target


# -- style statistics ----------------------------------------------------------

def measure_style_statistic(images, kind: str) -> float:
    """Scalar style statistic over a set of [-1, 1] image tensors.

    mean-hue: saturation-weighted circular mean in degrees, so near-gray
    pixels do not pollute the estimate.  mean-brightness: plain mean in the
    [-1, 1] convention.
    """
    if isinstance(images, torch.Tensor):
        images = list(images) if images.dim() == 4 else [images]
    else:
        images = list(images)
    if len(images) == 0:
        raise ValueError("statistic of an empty image set is undefined")
    if kind == "mean-brightness":
        return float(torch.stack([img.mean() for img in images]).mean())
    if kind != "mean-hue":
        raise ValueError(f"unknown statistic kind {kind!r}")
    sin_sum = cos_sum = 0.0
    for img in images:
        rgb = np.clip((img.detach().cpu().numpy().transpose(1, 2, 0) + 1.0) / 2.0, 0, 1)
        hsv = rgb_to_hsv(rgb)
        ang = hsv[..., 0] * 2.0 * np.pi
        w = hsv[..., 1]
        sin_sum += float(np.sum(w * np.sin(ang)))
        cos_sum += float(np.sum(w * np.cos(ang)))
    return float(np.degrees(np.arctan2(sin_sum, cos_sum)) % 360.0)


def measure_directory(manifest: DatasetManifest, kind: str, limit=None) -> float:
    paths = manifest.image_paths()[: limit or None]
    return measure_style_statistic([load_image_tensor(p) for p in paths], kind)


def circular_difference(a_deg: float, b_deg: float) -> float:
    """Signed shortest arc a - b in (-180, 180]."""
    d = (a_deg - b_deg) % 360.0
    return d - 360.0 if d > 180.0 else d


# -- translated dataset export ---------------------------------------------------

@dataclass
class TranslateSummary:
    out_dir: Path
    index_path: Path
    count: int
    failures: list


def translate_dataset(
    manifest: DatasetManifest,
    generator,
    z_mode="uniform",
    seed: int = 0,
    out_dir=None,
    batch_size: int = 8,
) -> TranslateSummary:
    """Render every manifest image through the generator with per-sample z.

    z_mode is "uniform" or ("fixed", v).  Labels are carried over unchanged;
    each output row of index.csv records image path, label path, and the z
    used, to six decimals.  Per-file decode failures are recorded and skipped.
    """
    from .networks import translate  # local import to avoid cycle at module load

    out = Path(out_dir) if out_dir else manifest.root.parent / f"{manifest.domain}_translated"
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    if z_mode == "uniform":
        draw_z = lambda: float(rng.uniform(0.0, 1.0))
    elif isinstance(z_mode, (tuple, list)) and len(z_mode) == 2 and z_mode[0] == "fixed":
        fixed = validate_scalar(z_mode[1])
        draw_z = lambda: fixed
    else:
        raise ValueError(f"z_mode must be 'uniform' or ('fixed', v), got {z_mode!r}")

    generator.eval()
    rows, failures, entries = [], [], []
    for entry in manifest.entries:
        z = draw_z()
        src = manifest.root / entry.image
        try:
            x = load_image_tensor(src)
        except Exception as exc:  # decode failure: report, keep going
            failures.append((entry.image, str(exc)))
            continue
        with torch.no_grad():
            y = translate(x.unsqueeze(0), z, generator)[0]
        name = Path(entry.image).name
        save_image_tensor(y, out / "images" / name)
        label_rel = None
        if entry.label is not None:
            label_rel = f"labels/{Path(entry.label).name}"
            (out / label_rel).write_bytes((manifest.root / entry.label).read_bytes())
        rows.append(f"images/{name},{label_rel or ''},{z:.6f}")
        entries.append(ManifestEntry(f"images/{name}", label_rel))

    index_path = out / "index.csv"
    index_path.write_text("\n".join(rows) + ("\n" if rows else ""))
    DatasetManifest(
        root=out, domain=f"{manifest.domain}_translated",
        image_size=manifest.image_size, entries=entries,
    ).save()
    return TranslateSummary(out_dir=out, index_path=index_path, count=len(rows), failures=failures)


def read_translation_index(index_path):
    """Rows of (image relpath, label relpath or None, z) from an index.csv."""
    rows = []
    for line in Path(index_path).read_text().splitlines():
        if not line.strip():
            continue
        image, label, z = line.split(",")
        rows.append((image, label or None, float(z)))
    return rows


# -- training-time preprocessing --------------------------------------------------

def augment_batch(images: torch.Tensor, crop_size: int, rng: np.random.Generator,
                  flip: bool = True) -> torch.Tensor:
    """Random crop to crop_size plus horizontal flip, seeded by the caller's rng."""
    n, _, h, w = images.shape
    if crop_size > h or crop_size > w:
        raise ValueError(f"crop {crop_size} exceeds image size {h}x{w}")
    out = []
    for i in range(n):
        top = int(rng.integers(0, h - crop_size + 1))
        left = int(rng.integers(0, w - crop_size + 1))
        img = images[i, :, top : top + crop_size, left : left + crop_size]
        if flip and rng.uniform() < 0.5:
            img = torch.flip(img, dims=[2])
        out.append(img)
    return torch.stack(out)
