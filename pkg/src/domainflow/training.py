"""Alternating adversarial training with the domainness curriculum.

One step updates the generators on the full objective at freshly sampled z,
then the discriminators on their side of the same losses.  Multi-target
training cycles one-hot mixture vertices plus a random simplex draw.  All
randomness lives in state-owned generators so checkpoints restore the exact
trajectory.
"""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .data import DatasetManifest, augment_batch, load_image_tensor, save_image_tensor
from .domainness import (
    BetaSchedule,
    DomainnessVector,
    one_hot_vector,
    sample_scalar,
    sample_vector,
)
from .networks import (
    MultiTargetModels,
    TranslationModels,
    build_multi_target_models,
    build_translation_models,
)
from .objectives import (
    LossBreakdown,
    ObjectiveConfig,
    discriminator_objective,
    full_objective,
    multi_target_discriminator_objective,
    multi_target_objective,
)

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """A step produced a non-finite loss; carries the last breakdown."""

    def __init__(self, message, breakdown=None):
        super().__init__(message)
        self.breakdown = breakdown


class CheckpointError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    total_iterations: int = 2000
    learning_rate: float = 2e-4
    lambda_cyc: float = 10.0
    batch_size: int = 1
    image_size: int = 64
    crop_size: int = 64
    seed: int = 0
    num_targets: int = 1
    style_gen_cycle: int | None = None
    gan_loss_kind: str = "least-squares"
    gen_filters: int = 32
    disc_filters: int = 32
    num_residual_blocks: int = 4
    gen_downsamplings: int = 2
    disc_downsamplings: int = 3
    image_channels: int = 3
    force_z: float | None = None
    z_per_batch: bool = False
    uniform_z: bool = False
    z_schedule: str = "beta"
    anchor_weight: float = 0.0
    fake_buffer_size: int = 0
    identity_weight: float = 0.0
    weight_target_reconstruction: bool = False
    source_name: str = "source"
    target_names: tuple = ("target",)

    def __post_init__(self):
        if self.total_iterations < 1:
            raise ValueError("total_iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.crop_size > self.image_size:
            raise ValueError("crop_size cannot exceed image_size")
        if self.num_targets < 1:
            raise ValueError("num_targets must be >= 1")
        if self.z_schedule not in ("beta", "uniform", "vertex-cycle"):
            raise ValueError(
                f"z_schedule must be beta, uniform, or vertex-cycle, got {self.z_schedule!r}"
            )
        if self.uniform_z and self.z_schedule == "beta":
            self.z_schedule = "uniform"
        self.target_names = tuple(self.target_names)
        if len(self.target_names) != self.num_targets:
            self.target_names = tuple(
                f"target{k}" for k in range(self.num_targets)
            ) if self.num_targets > 1 else ("target",)

    @property
    def phase_period(self) -> int:
        # K one-hot vertices plus one random mixture draw
        return self.style_gen_cycle or self.num_targets + 1

    def objective(self) -> ObjectiveConfig:
        return ObjectiveConfig(
            lambda_cyc=self.lambda_cyc,
            gan_loss_kind=self.gan_loss_kind,
            identity_weight=self.identity_weight,
            anchor_weight=self.anchor_weight,
            weight_target_reconstruction=self.weight_target_reconstruction,
        )


@dataclass
class StepResult:
    breakdown: LossBreakdown
    z_values: list
    disc_loss: float


class FakeBuffer:
    """History of generated images for discriminator updates.

    With probability 1/2 a freshly generated image is swapped for one
    produced by an earlier generator state, which keeps the discriminators
    from over-fitting the current generator's artifacts.  Draws come from the
    state's data rng so trajectories stay reproducible.  A mixed-history
    batch is weighted by its mean z, exact at batch size 1.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.images = []
        self.z_values = []

    def query(self, fake: torch.Tensor, z: float, rng: np.random.Generator):
        if self.capacity <= 0:
            return fake, z
        out_imgs, out_z = [], []
        for i in range(fake.shape[0]):
            img = fake[i : i + 1].detach()
            if len(self.images) < self.capacity:
                self.images.append(img)
                self.z_values.append(z)
                out_imgs.append(img)
                out_z.append(z)
            elif rng.uniform() < 0.5:
                j = int(rng.integers(0, self.capacity))
                out_imgs.append(self.images[j])
                out_z.append(self.z_values[j])
                self.images[j] = img
                self.z_values[j] = z
            else:
                out_imgs.append(img)
                out_z.append(z)
        return torch.cat(out_imgs), float(np.mean(out_z))


@dataclass
class TrainState:
    config: TrainConfig
    models: object
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    schedule: BetaSchedule
    z_rng: np.random.Generator
    data_rng: np.random.Generator
    iteration: int = 0
    buffer_t: FakeBuffer | None = None
    buffer_s: FakeBuffer | None = None


def _build_models(config: TrainConfig):
    if config.num_targets > 1:
        return build_multi_target_models(
            config.num_targets,
            image_channels=config.image_channels,
            gen_filters=config.gen_filters,
            disc_filters=config.disc_filters,
            num_residual_blocks=config.num_residual_blocks,
            gen_downsamplings=config.gen_downsamplings,
            disc_downsamplings=config.disc_downsamplings,
            seed=config.seed,
        )
    return build_translation_models(
        image_channels=config.image_channels,
        gen_filters=config.gen_filters,
        disc_filters=config.disc_filters,
        num_residual_blocks=config.num_residual_blocks,
        gen_downsamplings=config.gen_downsamplings,
        disc_downsamplings=config.disc_downsamplings,
        seed=config.seed,
    )


def create_train_state(config: TrainConfig) -> TrainState:
    models = _build_models(config)
    gen_params = [p for g in models.generators() for p in g.parameters()]
    disc_params = [p for d in models.discriminators() for p in d.parameters()]
    opt_g = torch.optim.Adam(gen_params, lr=config.learning_rate, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(disc_params, lr=config.learning_rate, betas=(0.5, 0.999))
    schedule = BetaSchedule(
        total_iterations=config.total_iterations,
        rng_seed=config.seed,
        uniform=config.z_schedule == "uniform",
    )
    return TrainState(
        config=config,
        models=models,
        opt_g=opt_g,
        opt_d=opt_d,
        schedule=schedule,
        z_rng=np.random.default_rng(config.seed),
        data_rng=np.random.default_rng(config.seed + 1),
        buffer_t=FakeBuffer(config.fake_buffer_size),
        buffer_s=FakeBuffer(config.fake_buffer_size),
    )


def _set_requires_grad(modules, flag: bool):
    for m in modules:
        for p in m.parameters():
            p.requires_grad_(flag)


def _draw_step_z(state: TrainState, batch_size: int) -> list:
    c = state.config
    if c.force_z is not None:
        return [float(c.force_z)] * batch_size
    if c.z_schedule == "vertex-cycle":
        # scalar adaptation of the multi-target phase schedule: both endpoint
        # domains as vertices plus one random interior draw, cycled per step
        phase = state.iteration % 3
        if phase < 2:
            return [float(phase)] * batch_size
        return [float(state.z_rng.uniform()) for _ in range(batch_size)]
    t = min(state.iteration, c.total_iterations)
    if c.z_per_batch:
        return [sample_scalar(t, state.schedule, state.z_rng)] * batch_size
    return [sample_scalar(t, state.schedule, state.z_rng) for _ in range(batch_size)]


def train_step(
    state: TrainState, batch_source: torch.Tensor, batch_target: torch.Tensor
) -> StepResult:
    """One generator update then one discriminator update at sampled z.

    Per-image z groups the batch by distinct z value, one forward pass per
    group; both translation directions share the group's z.
    """
    c = state.config
    models: TranslationModels = state.models
    if batch_source.shape[0] != batch_target.shape[0]:
        raise ValueError("source and target batches must have equal size")
    n = batch_source.shape[0]
    z_values = _draw_step_z(state, n)
    obj = c.objective()

    groups = []
    for z in dict.fromkeys(z_values):
        idx = [i for i, zi in enumerate(z_values) if zi == z]
        groups.append((z, idx))

    try:
        _set_requires_grad(models.discriminators(), False)
        state.opt_g.zero_grad()
        results = []
        agg = {"adv_source": 0.0, "adv_target": 0.0, "combined_adv": 0.0,
               "cycle": 0.0, "total": 0.0, "identity": 0.0}
        for z, idx in groups:
            res = full_objective(batch_source[idx], batch_target[idx], z, models, obj)
            weight = len(idx) / n
            (weight * res.total).backward()
            results.append((z, idx, res))
            b = res.breakdown()
            for k in agg:
                agg[k] += weight * getattr(b, k)
        state.opt_g.step()
        _set_requires_grad(models.discriminators(), True)

        state.opt_d.zero_grad()
        d_total = 0.0
        for z, idx, res in results:
            fake_t, z_t = res.fake_target, z
            fake_s, z_s = res.fake_source, z
            if state.buffer_t is not None and state.config.fake_buffer_size > 0:
                if fake_t is not None:
                    fake_t, z_t = state.buffer_t.query(fake_t, z, state.data_rng)
                if fake_s is not None:
                    fake_s, z_s = state.buffer_s.query(fake_s, z, state.data_rng)
            d_loss = batch_source.new_zeros(())
            if fake_t is not None:
                d_loss = d_loss + discriminator_objective(
                    batch_source[idx], batch_target[idx], fake_t, None, z_t, models, obj
                )
            if fake_s is not None:
                d_loss = d_loss + discriminator_objective(
                    batch_source[idx], batch_target[idx], None, fake_s, z_s, models, obj
                )
            ((len(idx) / n) * d_loss).backward()
            d_total += (len(idx) / n) * float(d_loss.detach())
        state.opt_d.step()
    except FloatingPointError as exc:
        raise TrainingDiverged(
            f"non-finite loss at iteration {state.iteration}: {exc}",
            breakdown=agg,
        ) from exc

    state.iteration += 1
    breakdown = LossBreakdown(**agg)
    breakdown.check(c.lambda_cyc)
    return StepResult(breakdown=breakdown, z_values=z_values, disc_loss=d_total)


def multi_target_phase(state: TrainState):
    """Mixture vector for the current step: K vertices then a random draw."""
    c = state.config
    phase = state.iteration % c.phase_period
    if phase < c.num_targets:
        return one_hot_vector(c.num_targets, phase)
    return sample_vector(c.num_targets, state.z_rng)


def train_multi_target_step(
    state: TrainState, batch_source: torch.Tensor, batches_targets: list
) -> StepResult:
    c = state.config
    if c.num_targets < 2:
        raise ValueError("multi-target step needs num_targets >= 2")
    models: MultiTargetModels = state.models
    zvec = multi_target_phase(state)
    obj = c.objective()

    try:
        _set_requires_grad(models.discriminators(), False)
        state.opt_g.zero_grad()
        res = multi_target_objective(batch_source, batches_targets, zvec, models, obj)
        res.total.backward()
        state.opt_g.step()
        _set_requires_grad(models.discriminators(), True)

        state.opt_d.zero_grad()
        d_loss = multi_target_discriminator_objective(
            batch_source, batches_targets, res.fake_mixture, res.fake_sources,
            zvec, models, obj,
        )
        d_loss.backward()
        state.opt_d.step()
    except FloatingPointError as exc:
        raise TrainingDiverged(
            f"non-finite loss at iteration {state.iteration}", breakdown=None
        ) from exc

    b = res.breakdown()
    state.iteration += 1
    breakdown = LossBreakdown(
        adv_source=b["adv_source"], adv_target=b["adv_mixture"],
        combined_adv=b["adv_mixture"] + b["adv_source"],
        cycle=b["cycle"], total=b["total"],
    )
    return StepResult(
        breakdown=breakdown, z_values=list(zvec.values), disc_loss=float(d_loss.detach())
    )


# -- checkpointing -------------------------------------------------------------

def _models_state(models) -> dict:
    if isinstance(models, MultiTargetModels):
        return {
            "gen_st": models.gen_st.state_dict(),
            "gen_ts": models.gen_ts.state_dict(),
            "disc_source": models.disc_source.state_dict(),
            "disc_targets": [d.state_dict() for d in models.disc_targets],
        }
    return {
        "gen_st": models.gen_st.state_dict(),
        "gen_ts": models.gen_ts.state_dict(),
        "disc_source": models.disc_source.state_dict(),
        "disc_target": models.disc_target.state_dict(),
    }


def checkpoint(state: TrainState, path) -> Path:
    """Serialize models, optimizers, and rng streams; restore() is bit-exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    c = state.config
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "manifest": {
            "iteration": state.iteration,
            "num_targets": c.num_targets,
            "image_size": c.image_size,
            "image_channels": c.image_channels,
            "source_name": c.source_name,
            "target_names": list(c.target_names),
        },
        "config": dataclasses.asdict(c),
        "models": _models_state(state.models),
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "rng": {
            "z": state.z_rng.bit_generator.state,
            "data": state.data_rng.bit_generator.state,
            "torch": torch.get_rng_state(),
        },
        "buffers": {
            "t": {"images": state.buffer_t.images, "z": state.buffer_t.z_values}
            if state.buffer_t
            else None,
            "s": {"images": state.buffer_s.images, "z": state.buffer_s.z_values}
            if state.buffer_s
            else None,
        },
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    path.write_bytes(buf.getvalue())
    return path


def load_checkpoint_payload(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"checkpoint {path} is unreadable: {exc}") from exc
    version = payload.get("format_version") if isinstance(payload, dict) else None
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format version {version!r}, "
            f"this build reads version {CHECKPOINT_VERSION}"
        )
    return payload


def restore(path) -> TrainState:
    payload = load_checkpoint_payload(path)
    cfg_dict = dict(payload["config"])
    cfg_dict["target_names"] = tuple(cfg_dict.get("target_names", ()))
    config = TrainConfig(**cfg_dict)
    state = create_train_state(config)
    ms = payload["models"]
    state.models.gen_st.load_state_dict(ms["gen_st"])
    state.models.gen_ts.load_state_dict(ms["gen_ts"])
    state.models.disc_source.load_state_dict(ms["disc_source"])
    if isinstance(state.models, MultiTargetModels):
        for d, sd in zip(state.models.disc_targets, ms["disc_targets"]):
            d.load_state_dict(sd)
    else:
        state.models.disc_target.load_state_dict(ms["disc_target"])
    state.opt_g.load_state_dict(payload["opt_g"])
    state.opt_d.load_state_dict(payload["opt_d"])
    state.z_rng.bit_generator.state = payload["rng"]["z"]
    state.data_rng.bit_generator.state = payload["rng"]["data"]
    torch.set_rng_state(payload["rng"]["torch"])
    buffers = payload.get("buffers") or {}
    if buffers.get("t") and state.buffer_t is not None:
        state.buffer_t.images = list(buffers["t"]["images"])
        state.buffer_t.z_values = list(buffers["t"]["z"])
    if buffers.get("s") and state.buffer_s is not None:
        state.buffer_s.images = list(buffers["s"]["images"])
        state.buffer_s.z_values = list(buffers["s"]["z"])
    state.iteration = payload["manifest"]["iteration"]
    return state


def load_generator(path, direction: str = "source-to-target"):
    """Generator plus manifest from a checkpoint, for inference-side callers."""
    payload = load_checkpoint_payload(path)
    cfg_dict = dict(payload["config"])
    cfg_dict["target_names"] = tuple(cfg_dict.get("target_names", ()))
    config = TrainConfig(**cfg_dict)
    models = _build_models(config)
    key = "gen_st" if direction == "source-to-target" else "gen_ts"
    gen = models.gen_st if key == "gen_st" else models.gen_ts
    gen.load_state_dict(payload["models"][key])
    gen.eval()
    return gen, payload["manifest"]


# -- data feeding and the training loop -----------------------------------------

class DomainData:
    """All images of one manifest preloaded as a (n, C, H, W) tensor."""

    def __init__(self, manifest: DatasetManifest, image_size: int):
        imgs = []
        for p in manifest.image_paths():
            t = load_image_tensor(p)
            if t.shape[-1] != image_size or t.shape[-2] != image_size:
                t = torch.nn.functional.interpolate(
                    t.unsqueeze(0), size=(image_size, image_size),
                    mode="bilinear", align_corners=False,
                )[0]
            imgs.append(t)
        self.images = torch.stack(imgs)

    def sample(self, batch_size: int, crop_size: int, rng: np.random.Generator) -> torch.Tensor:
        idx = rng.integers(0, self.images.shape[0], size=batch_size)
        batch = self.images[torch.from_numpy(idx)]
        return augment_batch(batch, crop_size, rng)


class MetricsLog:
    """Append-only CSV of (iteration, z, adv_source, adv_target, cycle, total)."""

    HEADER = "iteration,z,adv_source,adv_target,cycle,total"

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists():
            self.path.write_text(self.HEADER + "\n")

    def append(self, iteration: int, step: StepResult):
        z = (
            f"{step.z_values[0]:.6f}"
            if len(step.z_values) == 1
            else ";".join(f"{z:.6f}" for z in step.z_values)
        )
        b = step.breakdown
        with self.path.open("a") as f:
            f.write(
                f"{iteration},{z},{b.adv_source:.6f},{b.adv_target:.6f},"
                f"{b.cycle:.6f},{b.total:.6f}\n"
            )

    @staticmethod
    def read_z_column(path):
        rows = Path(path).read_text().splitlines()[1:]
        out = []
        for row in rows:
            zcell = row.split(",")[1]
            out.append([float(v) for v in zcell.split(";")])
        return out


SAMPLE_GRID_Z = (0.0, 0.25, 0.5, 0.75, 1.0)


def save_sample_grid(state: TrainState, images: torch.Tensor, path) -> Path:
    """Horizontal strip per image: the translation swept over the z grid.

    Multi-target models sweep the one-hot vertices plus the uniform mixture.
    """
    c = state.config
    gen = state.models.gen_st
    was_training = gen.training
    gen.eval()
    if c.num_targets > 1:
        k = c.num_targets
        zs = [one_hot_vector(k, i) for i in range(k)]
        zs.append(DomainnessVector(tuple([1.0 / k] * k)))
    else:
        zs = list(SAMPLE_GRID_Z)
    rows = []
    with torch.no_grad():
        for i in range(min(4, images.shape[0])):
            x = images[i : i + 1]
            cells = [x[0]] + [gen(x, z)[0] for z in zs]
            rows.append(torch.cat(cells, dim=2))
    if was_training:
        gen.train()
    grid = torch.cat(rows, dim=1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_image_tensor(grid, path)
    return path


def run_training(
    config: TrainConfig,
    source_manifest: DatasetManifest,
    target_manifests,
    run_dir,
    state: TrainState | None = None,
    checkpoint_every: int | None = None,
    progress_every: int | None = None,
) -> TrainState:
    """Drive steps from fresh or restored state; writes metrics and a checkpoint."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(target_manifests, DatasetManifest):
        target_manifests = [target_manifests]
    if len(target_manifests) != config.num_targets:
        raise ValueError(
            f"{len(target_manifests)} target manifests for num_targets={config.num_targets}"
        )

    if state is None:
        state = create_train_state(config)
    elif state.config != config:
        arch_fields = (
            "gen_filters", "disc_filters", "num_residual_blocks",
            "gen_downsamplings", "disc_downsamplings", "image_channels",
            "num_targets",
        )
        mismatched = [
            f for f in arch_fields
            if getattr(state.config, f) != getattr(config, f)
        ]
        if mismatched:
            raise ValueError(
                f"resumed checkpoint disagrees with the config on {mismatched}"
            )
        # run-level knobs (notably an extended total_iterations) follow the
        # new config; the schedule horizon moves with it
        state.config = config
        state.schedule.total_iterations = config.total_iterations
    source = DomainData(source_manifest, config.image_size)
    targets = [DomainData(m, config.image_size) for m in target_manifests]
    metrics = MetricsLog(run_dir / "metrics.csv")
    ckpt_path = run_dir / "checkpoint.pt"

    while state.iteration < config.total_iterations:
        batch_s = source.sample(config.batch_size, config.crop_size, state.data_rng)
        if config.num_targets == 1:
            batch_t = targets[0].sample(config.batch_size, config.crop_size, state.data_rng)
            step = train_step(state, batch_s, batch_t)
        else:
            batches_t = [
                t.sample(config.batch_size, config.crop_size, state.data_rng)
                for t in targets
            ]
            step = train_multi_target_step(state, batch_s, batches_t)
        metrics.append(state.iteration - 1, step)
        if progress_every and state.iteration % progress_every == 0:
            print(
                f"iter {state.iteration}/{config.total_iterations} "
                f"total={step.breakdown.total:.4f} cycle={step.breakdown.cycle:.4f}",
                flush=True,
            )
        if checkpoint_every and state.iteration % checkpoint_every == 0:
            checkpoint(state, ckpt_path)
            save_sample_grid(
                state, source.images[:4], run_dir / f"samples_{state.iteration:06d}.png"
            )
    checkpoint(state, ckpt_path)
    save_sample_grid(state, source.images[:4], run_dir / "samples_final.png")
    return state
