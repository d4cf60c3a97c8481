"""Segmentation with a domainness-weighted adversarial branch.

Training consumes a translated source set whose per-sample z records how far
each image sits along the source-to-target flow.  The adversarial alignment
between source-sample and target-sample predictions is weighted sqrt(1 - z)
per source sample: samples already near the target style need less pushing.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import (
    DatasetManifest,
    load_image_tensor,
    load_label_map,
    read_translation_index,
)
from .networks import PatchDiscriminator
from .objectives import boost_weight


class _DoubleConv(nn.Module):
    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, 1, 1),
            nn.InstanceNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, 1, 1),
            nn.InstanceNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class SegModel(nn.Module):
    """Small U-shaped encoder-decoder emitting per-pixel class logits."""

    def __init__(self, num_classes: int = 2, in_channels: int = 3,
                 base_filters: int = 16, depth: int = 3):
        super().__init__()
        self.num_classes = num_classes
        self.stem = _DoubleConv(in_channels, base_filters)
        ch = base_filters
        self.down = nn.ModuleList()
        for _ in range(depth):
            self.down.append(
                nn.Sequential(nn.Conv2d(ch, ch * 2, 3, 2, 1), _DoubleConv(ch * 2, ch * 2))
            )
            ch *= 2
        self.up = nn.ModuleList()
        for _ in range(depth):
            self.up.append(_DoubleConv(ch + ch // 2, ch // 2))
            ch //= 2
        self.head = nn.Conv2d(ch, num_classes, 1)

    def forward(self, x):
        skips = [self.stem(x)]
        h = skips[0]
        for block in self.down:
            h = block(h)
            skips.append(h)
        skips.pop()
        for block in self.up:
            h = F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False)
            h = block(torch.cat([h, skips.pop()], dim=1))
        return self.head(h)


@dataclass
class BoostBatch:
    images: torch.Tensor
    labels: torch.Tensor
    z: list
    target_images: torch.Tensor

    def __post_init__(self):
        if len(self.z) != self.images.shape[0]:
            raise ValueError(
                f"{self.images.shape[0]} source samples but {len(self.z)} z values"
            )


@dataclass
class BoostConfig:
    num_classes: int = 2
    iterations: int = 400
    learning_rate: float = 1e-3
    batch_size: int = 4
    lambda_adv: float = 0.01
    seed: int = 0
    base_filters: int = 16
    weight_discriminator: bool = True
    image_size: int = 64


def build_boost_models(config: BoostConfig, seed=None):
    torch.manual_seed(config.seed if seed is None else seed)
    seg = SegModel(num_classes=config.num_classes, base_filters=config.base_filters)
    disc = PatchDiscriminator(
        in_channels=config.num_classes, base_filters=config.base_filters,
        num_downsamplings=2,
    )
    return seg, disc


def boosted_da_step(
    seg: SegModel,
    disc: PatchDiscriminator,
    opt_seg,
    opt_disc,
    batch: BoostBatch,
    config: BoostConfig,
) -> dict:
    """Supervised cross-entropy plus weighted output-space alignment.

    The segmentation model pushes its source-sample predictions toward the
    target prediction statistics, each sample damped by sqrt(1 - z); the
    discriminator separates the two prediction distributions.  lambda_adv=0
    disables the branch entirely (plain supervised training).
    """
    if batch.z is None or len(batch.z) != batch.images.shape[0]:
        raise ValueError("every source sample needs a recorded z")
    weights = torch.tensor([boost_weight(z) for z in batch.z], dtype=torch.float32)

    for p in disc.parameters():
        p.requires_grad_(False)
    opt_seg.zero_grad()
    logits = seg(batch.images)
    ce = F.cross_entropy(logits, batch.labels)
    losses = {"ce": float(ce.detach())}
    seg_loss = ce
    if config.lambda_adv > 0:
        src_probs = F.softmax(logits, dim=1)
        scores = disc(src_probs)
        per_sample = ((scores - 1.0) ** 2).mean(dim=(1, 2, 3))
        adv_seg = (weights * per_sample).mean()
        seg_loss = seg_loss + config.lambda_adv * adv_seg
        losses["adv_seg"] = float(adv_seg.detach())
    seg_loss.backward()
    opt_seg.step()
    for p in disc.parameters():
        p.requires_grad_(True)

    if config.lambda_adv > 0:
        opt_disc.zero_grad()
        with torch.no_grad():
            src_probs = F.softmax(seg(batch.images), dim=1)
            tgt_probs = F.softmax(seg(batch.target_images), dim=1)
        src_scores = disc(src_probs)
        tgt_scores = disc(tgt_probs)
        fake_per_sample = (src_scores**2).mean(dim=(1, 2, 3))
        if config.weight_discriminator:
            fake_term = (weights * fake_per_sample).mean()
        else:
            fake_term = fake_per_sample.mean()
        d_loss = 0.5 * (((tgt_scores - 1.0) ** 2).mean() + fake_term)
        d_loss.backward()
        opt_disc.step()
        losses["disc"] = float(d_loss.detach())
    losses["total"] = float(seg_loss.detach())
    return losses


# -- evaluation -----------------------------------------------------------------

def confusion_counts(pred: torch.Tensor, truth: torch.Tensor, num_classes: int):
    """Per-class (true positive, false positive, false negative) pixel counts."""
    counts = np.zeros((num_classes, 3), dtype=np.int64)
    p = pred.reshape(-1).numpy()
    t = truth.reshape(-1).numpy()
    for c in range(num_classes):
        counts[c, 0] = int(np.sum((p == c) & (t == c)))
        counts[c, 1] = int(np.sum((p == c) & (t != c)))
        counts[c, 2] = int(np.sum((p != c) & (t == c)))
    return counts


def miou_from_counts(counts: np.ndarray, present: set) -> tuple:
    per_class = {}
    for c in range(counts.shape[0]):
        if c not in present:
            continue
        tp, fp, fn = counts[c]
        denom = tp + fp + fn
        per_class[c] = float(tp / denom) if denom > 0 else 0.0
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return per_class, mean


def evaluate_miou(seg: SegModel, manifest: DatasetManifest, batch_size: int = 8):
    """Mean intersection-over-union over classes present in the ground truth."""
    paths = list(zip(manifest.image_paths(), manifest.label_paths()))
    if not paths or any(lbl is None for _, lbl in paths):
        raise ValueError("evaluation needs a labeled, nonempty manifest")
    seg.eval()
    counts = np.zeros((seg.num_classes, 3), dtype=np.int64)
    present = set()
    with torch.no_grad():
        for i in range(0, len(paths), batch_size):
            chunk = paths[i : i + batch_size]
            imgs = torch.stack([load_image_tensor(p) for p, _ in chunk])
            labels = torch.stack([load_label_map(l) for _, l in chunk])
            preds = seg(imgs).argmax(dim=1)
            present.update(int(c) for c in torch.unique(labels))
            counts += confusion_counts(preds, labels, seg.num_classes)
    return miou_from_counts(counts, present)


SEG_CHECKPOINT_VERSION = 1


def save_seg(seg: SegModel, config: BoostConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": SEG_CHECKPOINT_VERSION,
            "config": dataclasses.asdict(config),
            "state": seg.state_dict(),
        },
        path,
    )
    return path


def load_seg(path):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version") if isinstance(payload, dict) else None
    if version != SEG_CHECKPOINT_VERSION:
        raise ValueError(
            f"segmentation checkpoint {path} has version {version!r}, expected "
            f"{SEG_CHECKPOINT_VERSION}"
        )
    config = BoostConfig(**payload["config"])
    seg = SegModel(num_classes=config.num_classes, base_filters=config.base_filters)
    seg.load_state_dict(payload["state"])
    seg.eval()
    return seg, config


# -- training loop -----------------------------------------------------------------

class _LabeledSet:
    def __init__(self, root, rows, image_size):
        self.images, self.labels, self.z = [], [], []
        root = Path(root)
        for image_rel, label_rel, z in rows:
            self.images.append(load_image_tensor(root / image_rel))
            if label_rel is None:
                raise ValueError(f"{image_rel} has no label")
            self.labels.append(load_label_map(root / label_rel))
            self.z.append(z)
        self.images = torch.stack(self.images)
        self.labels = torch.stack(self.labels)

    def sample(self, n, rng):
        idx = rng.integers(0, self.images.shape[0], size=n)
        t = torch.from_numpy(idx)
        return self.images[t], self.labels[t], [self.z[i] for i in idx]


def rows_from_manifest(manifest: DatasetManifest, z: float = 0.0):
    """Treat a plain labeled manifest as a translated set at constant z."""
    return [(e.image, e.label, z) for e in manifest.entries]


def boost_train(
    source_root,
    source_rows,
    target_manifest: DatasetManifest,
    config: BoostConfig,
    seed=None,
) -> SegModel:
    """Train a segmentation model on (image, label, z) rows.

    ``source_rows`` come from a translated-set index (per-sample z) or from
    ``rows_from_manifest`` for untranslated baselines.  Target images feed the
    adversarial branch only; their labels are never read here.
    """
    seed = config.seed if seed is None else seed
    seg, disc = build_boost_models(config, seed=seed)
    opt_seg = torch.optim.Adam(seg.parameters(), lr=config.learning_rate)
    opt_disc = torch.optim.Adam(disc.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(seed)

    source = _LabeledSet(source_root, source_rows, config.image_size)
    target_images = torch.stack(
        [load_image_tensor(p) for p in target_manifest.image_paths()]
    )
    seg.train()
    for _ in range(config.iterations):
        imgs, labels, zs = source.sample(config.batch_size, rng)
        t_idx = torch.from_numpy(
            rng.integers(0, target_images.shape[0], size=config.batch_size)
        )
        batch = BoostBatch(
            images=imgs, labels=labels, z=zs, target_images=target_images[t_idx]
        )
        boosted_da_step(seg, disc, opt_seg, opt_disc, batch, config)
    return seg
