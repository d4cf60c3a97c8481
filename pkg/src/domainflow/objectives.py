"""Loss functions: adversarial terms, domainness weighting, cycle consistency.

The generator objective for an intermediate domain at domainness z weights
its adversarial distance to the source by (1-z) and to the target by z; the
reverse-direction generator targets the complementary mixture, so its weights
swap.  Cycle consistency reuses the same z on the way back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .domainness import DomainnessVector, validate_scalar, validate_vector
from .networks import MultiTargetModels, TranslationModels

GAN_LOSS_KINDS = ("least-squares", "log-loss")
DIRECTIONS = ("source-to-target", "target-to-source", "both")


@dataclass
class ObjectiveConfig:
    lambda_cyc: float = 10.0
    gan_loss_kind: str = "least-squares"
    direction: str = "both"
    identity_weight: float = 0.0
    anchor_weight: float = 0.0
    weight_target_reconstruction: bool = False

    def __post_init__(self):
        if self.lambda_cyc < 0:
            raise ValueError("lambda_cyc must be non-negative")
        if self.gan_loss_kind not in GAN_LOSS_KINDS:
            raise ValueError(f"gan_loss_kind must be one of {GAN_LOSS_KINDS}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")


@dataclass
class LossBreakdown:
    """Detached per-term values; total = combined_adv + lambda_cyc * cycle (+identity)."""

    adv_source: float
    adv_target: float
    combined_adv: float
    cycle: float
    total: float
    identity: float = 0.0

    def check(self, lambda_cyc: float, tol: float = 1e-6):
        recomputed = self.combined_adv + lambda_cyc * self.cycle + self.identity
        if not math.isclose(recomputed, self.total, rel_tol=tol, abs_tol=tol):
            raise AssertionError(
                f"loss breakdown inconsistent: {recomputed} != {self.total}"
            )
        if self.cycle < 0:
            raise AssertionError("cycle loss must be non-negative")


def _check_finite(t: torch.Tensor, name: str):
    if not torch.isfinite(t).all():
        raise FloatingPointError(f"{name} contains non-finite values")


def adversarial_pair(
    fake_scores: torch.Tensor,
    real_scores: torch.Tensor | None,
    role: str,
    kind: str = "least-squares",
) -> torch.Tensor:
    """Adversarial loss over patch score maps.

    Discriminator role pushes real scores to the real label and fake scores
    to the fake label (halved, CycleGAN convention); generator role pushes
    fake scores to the real label.  Log-loss treats scores as logits.
    """
    if kind not in GAN_LOSS_KINDS:
        raise ValueError(f"unknown gan loss kind {kind!r}")
    _check_finite(fake_scores, "fake scores")
    if role == "generator":
        if kind == "least-squares":
            return F.mse_loss(fake_scores, torch.ones_like(fake_scores))
        return F.binary_cross_entropy_with_logits(fake_scores, torch.ones_like(fake_scores))
    if role != "discriminator":
        raise ValueError(f"role must be 'generator' or 'discriminator', got {role!r}")
    if real_scores is None:
        raise ValueError("discriminator role needs real scores")
    _check_finite(real_scores, "real scores")
    if kind == "least-squares":
        real_term = F.mse_loss(real_scores, torch.ones_like(real_scores))
        fake_term = F.mse_loss(fake_scores, torch.zeros_like(fake_scores))
    else:
        real_term = F.binary_cross_entropy_with_logits(real_scores, torch.ones_like(real_scores))
        fake_term = F.binary_cross_entropy_with_logits(fake_scores, torch.zeros_like(fake_scores))
    return 0.5 * (real_term + fake_term)


def combined_adversarial(adv_source, adv_target, z: float):
    """Domainness-weighted combination (1-z)*adv_source + z*adv_target."""
    z = validate_scalar(z)
    return (1.0 - z) * adv_source + z * adv_target


def cycle_loss(x: torch.Tensor, x_roundtrip: torch.Tensor) -> torch.Tensor:
    """Mean absolute reconstruction error over all elements."""
    if x.shape != x_roundtrip.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_roundtrip.shape)}")
    return (x - x_roundtrip).abs().mean()


def boost_weight(z: float) -> float:
    """Adversarial down-weighting sqrt(1-z) for a translated sample at domainness z."""
    z = validate_scalar(z)
    return math.sqrt(1.0 - z)


def multi_target_adversarial(per_target_losses, zvec) -> torch.Tensor:
    """Mixture-weighted sum of per-target adversarial losses."""
    if not isinstance(zvec, DomainnessVector):
        zvec = validate_vector(zvec)
    if len(per_target_losses) != zvec.k:
        raise ValueError(
            f"{len(per_target_losses)} losses for a {zvec.k}-component mixture"
        )
    total = None
    for w, loss in zip(zvec.values, per_target_losses):
        term = w * loss
        total = term if total is None else total + term
    return total


@dataclass
class FullObjectiveResult:
    """Generator-side objective with live graph plus the translated batches.

    ``total`` keeps the autograd graph; ``breakdown()`` detaches for logging.
    The fake images are returned so the discriminator step can reuse them.
    """

    total: torch.Tensor
    adv_source: torch.Tensor
    adv_target: torch.Tensor
    combined_adv: torch.Tensor
    cycle: torch.Tensor
    identity: torch.Tensor
    lambda_cyc: float
    fake_target: torch.Tensor | None = None
    fake_source: torch.Tensor | None = None

    def breakdown(self) -> LossBreakdown:
        b = LossBreakdown(
            adv_source=float(self.adv_source.detach()),
            adv_target=float(self.adv_target.detach()),
            combined_adv=float(self.combined_adv.detach()),
            cycle=float(self.cycle.detach()),
            total=float(self.total.detach()),
            identity=float(self.identity.detach()),
        )
        b.check(self.lambda_cyc)
        return b


def full_objective(
    batch_source: torch.Tensor,
    batch_target: torch.Tensor,
    z: float,
    models: TranslationModels,
    config: ObjectiveConfig,
) -> FullObjectiveResult:
    """Generator objective: z-weighted adversarial terms plus cycle consistency.

    The source-to-target direction weights (adv vs source, adv vs target) by
    (1-z, z); the target-to-source generator produces the complementary
    mixture, so its weights are (z, 1-z).
    """
    if batch_source.numel() == 0 or batch_target.numel() == 0:
        raise ValueError("batches must be nonempty")
    z = validate_scalar(z)
    kind = config.gan_loss_kind
    zero = batch_source.new_zeros(())

    adv_source = zero.clone()
    adv_target = zero.clone()
    combined = zero.clone()
    cycle = zero.clone()
    identity = zero.clone()
    fake_target = fake_source = None

    if config.direction in ("source-to-target", "both"):
        fake_target = models.gen_st(batch_source, z)
        st_vs_source = adversarial_pair(models.disc_source(fake_target), None, "generator", kind)
        st_vs_target = adversarial_pair(models.disc_target(fake_target), None, "generator", kind)
        adv_source = adv_source + st_vs_source
        adv_target = adv_target + st_vs_target
        combined = combined + combined_adversarial(st_vs_source, st_vs_target, z)
        cycle = cycle + cycle_loss(batch_source, models.gen_ts(fake_target, z))

    if config.direction in ("target-to-source", "both"):
        fake_source = models.gen_ts(batch_target, z)
        ts_vs_source = adversarial_pair(models.disc_source(fake_source), None, "generator", kind)
        ts_vs_target = adversarial_pair(models.disc_target(fake_source), None, "generator", kind)
        adv_source = adv_source + ts_vs_source
        adv_target = adv_target + ts_vs_target
        # complementary mixture: weight z on the source side, (1-z) on the target side
        combined = combined + combined_adversarial(ts_vs_target, ts_vs_source, z)
        cycle = cycle + cycle_loss(batch_target, models.gen_st(fake_source, z))

    if config.identity_weight > 0:
        identity = identity + cycle_loss(batch_target, models.gen_st(batch_target, z))
        identity = identity + cycle_loss(batch_source, models.gen_ts(batch_source, z))
        identity = config.identity_weight * config.lambda_cyc * identity

    if config.anchor_weight > 0:
        # boundary condition of the domain flow: at z=0 the intermediate
        # domain equals each generator's input domain, so both maps have a
        # pixel-space identity target there
        anchor = cycle_loss(batch_source, models.gen_st(batch_source, 0.0))
        anchor = anchor + cycle_loss(batch_target, models.gen_ts(batch_target, 0.0))
        identity = identity + config.anchor_weight * anchor

    total = combined + config.lambda_cyc * cycle + identity
    _check_finite(total, "generator objective")
    return FullObjectiveResult(
        total=total,
        adv_source=adv_source,
        adv_target=adv_target,
        combined_adv=combined,
        cycle=cycle,
        identity=identity,
        lambda_cyc=config.lambda_cyc,
        fake_target=fake_target,
        fake_source=fake_source,
    )


def discriminator_objective(
    batch_source: torch.Tensor,
    batch_target: torch.Tensor,
    fake_target: torch.Tensor | None,
    fake_source: torch.Tensor | None,
    z: float,
    models: TranslationModels,
    config: ObjectiveConfig,
) -> torch.Tensor:
    """Discriminator-side loss with the same domainness weighting as the generators.

    Fakes are detached here, so the caller can pass the tensors produced by
    ``full_objective`` directly.
    """
    z = validate_scalar(z)
    kind = config.gan_loss_kind
    total = batch_source.new_zeros(())

    real_s = models.disc_source(batch_source)
    real_t = models.disc_target(batch_target)
    if fake_target is not None:
        ft = fake_target.detach()
        total = total + (1.0 - z) * adversarial_pair(models.disc_source(ft), real_s, "discriminator", kind)
        total = total + z * adversarial_pair(models.disc_target(ft), real_t, "discriminator", kind)
    if fake_source is not None:
        fs = fake_source.detach()
        total = total + z * adversarial_pair(models.disc_source(fs), real_s, "discriminator", kind)
        total = total + (1.0 - z) * adversarial_pair(models.disc_target(fs), real_t, "discriminator", kind)
    _check_finite(total, "discriminator objective")
    return total


@dataclass
class MultiTargetObjectiveResult:
    total: torch.Tensor
    adv_mixture: torch.Tensor
    adv_source: torch.Tensor
    cycle: torch.Tensor
    fake_mixture: torch.Tensor
    fake_sources: list = field(default_factory=list)

    def breakdown(self) -> dict:
        return {
            "adv_mixture": float(self.adv_mixture.detach()),
            "adv_source": float(self.adv_source.detach()),
            "cycle": float(self.cycle.detach()),
            "total": float(self.total.detach()),
        }


def multi_target_objective(
    batch_source: torch.Tensor,
    batches_targets: list,
    zvec,
    models: MultiTargetModels,
    config: ObjectiveConfig,
) -> MultiTargetObjectiveResult:
    """Generator objective with K target domains and a mixture vector.

    The translated source image pays a z_k-weighted adversarial cost against
    each target discriminator; reverse translations from each target pay a
    z_k-weighted cost against the source discriminator.  Reconstruction of
    the target side is optionally mixture-weighted.
    """
    if not isinstance(zvec, DomainnessVector):
        zvec = validate_vector(zvec)
    if len(batches_targets) != models.num_targets or zvec.k != models.num_targets:
        raise ValueError(
            f"need {models.num_targets} target batches and mixture components"
        )
    kind = config.gan_loss_kind

    fake_mixture = models.gen_st(batch_source, zvec)
    per_target = [
        adversarial_pair(disc(fake_mixture), None, "generator", kind)
        for disc in models.disc_targets
    ]
    adv_mixture = multi_target_adversarial(per_target, zvec)

    adv_source = batch_source.new_zeros(())
    cycle = cycle_loss(batch_source, models.gen_ts(fake_mixture, zvec))
    fake_sources = []
    target_rec = []
    for batch_t in batches_targets:
        fake_s = models.gen_ts(batch_t, zvec)
        fake_sources.append(fake_s)
        target_rec.append(cycle_loss(batch_t, models.gen_st(fake_s, zvec)))
    adv_source = multi_target_adversarial(
        [adversarial_pair(models.disc_source(fs), None, "generator", kind) for fs in fake_sources],
        zvec,
    )
    if config.weight_target_reconstruction:
        cycle = cycle + multi_target_adversarial(target_rec, zvec)
    else:
        cycle = cycle + sum(target_rec) / len(target_rec)

    total = adv_mixture + adv_source + config.lambda_cyc * cycle
    if config.identity_weight > 0:
        # mixture-weighted identity: at vertex e_k the forward generator must
        # leave domain-k images unchanged, which pins per-vertex behavior
        identity_terms = [
            cycle_loss(batch_t, models.gen_st(batch_t, zvec))
            for batch_t in batches_targets
        ]
        total = total + config.identity_weight * config.lambda_cyc * multi_target_adversarial(
            identity_terms, zvec
        )
    _check_finite(total, "multi-target objective")
    return MultiTargetObjectiveResult(
        total=total,
        adv_mixture=adv_mixture,
        adv_source=adv_source,
        cycle=cycle,
        fake_mixture=fake_mixture,
        fake_sources=fake_sources,
    )


def multi_target_discriminator_objective(
    batch_source: torch.Tensor,
    batches_targets: list,
    fake_mixture: torch.Tensor,
    fake_sources: list,
    zvec,
    models: MultiTargetModels,
    config: ObjectiveConfig,
) -> torch.Tensor:
    if not isinstance(zvec, DomainnessVector):
        zvec = validate_vector(zvec)
    kind = config.gan_loss_kind
    fm = fake_mixture.detach()
    per_target = [
        adversarial_pair(disc(fm), disc(batch_t), "discriminator", kind)
        for disc, batch_t in zip(models.disc_targets, batches_targets)
    ]
    total = multi_target_adversarial(per_target, zvec)
    real_s = models.disc_source(batch_source)
    source_terms = [
        adversarial_pair(models.disc_source(fs.detach()), real_s, "discriminator", kind)
        for fs in fake_sources
    ]
    total = total + multi_target_adversarial(source_terms, zvec)
    _check_finite(total, "multi-target discriminator objective")
    return total
