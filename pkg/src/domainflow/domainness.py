"""Domainness variable: validation, densities, and curriculum sampling.

The domainness scalar z in [0, 1] positions an intermediate domain between
the source (z=0) and target (z=1) styles.  For multi-target models z becomes
a K-dim simplex point giving per-target mixture weights.  Training draws z
from Beta(alpha, 1) where alpha ramps up with the iteration count, so early
steps see source-like z and late steps see target-like z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-6


class DomainnessError(ValueError):
    """Raised when a domainness value violates its range or simplex constraint."""


def validate_scalar(z: float) -> float:
    z = float(z)
    if not math.isfinite(z) or z < 0.0 or z > 1.0:
        raise DomainnessError(f"domainness scalar must lie in [0, 1], got {z!r}")
    return z


@dataclass(frozen=True)
class DomainnessVector:
    """K-dim mixture weights over target domains; components sum to 1."""

    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def k(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def validate_vector(values) -> DomainnessVector:
    """Validate (and renormalize within tolerance) a candidate mixture vector.

    Inputs whose sum is within SIMPLEX_TOL of 1 are renormalized so float
    round-trips through the service API stay valid; larger deviations and
    out-of-range components are rejected.
    """
    vals = [float(v) for v in values]
    if len(vals) < 1:
        raise DomainnessError("domainness vector must have at least one component")
    for i, v in enumerate(vals):
        if not math.isfinite(v) or v < 0.0 or v > 1.0:
            raise DomainnessError(
                f"component {i} = {v!r} outside [0, 1]"
            )
    total = sum(vals)
    if abs(total - 1.0) > SIMPLEX_TOL:
        raise DomainnessError(
            f"components sum to {total!r}, must equal 1 within {SIMPLEX_TOL}"
        )
    if total != 1.0:
        vals = [v / total for v in vals]
    return DomainnessVector(tuple(vals))


@dataclass
class BetaSchedule:
    """Iteration-dependent Beta(alpha, 1) curriculum for the scalar z.

    alpha grows exponentially from e^-2 at t=0 through 1 at t=T/2 to e^2 at
    t=T, shifting the sampled z from source-like toward target-like.  With
    ``uniform=True`` the schedule falls back to plain U(0, 1) for ablations.
    """

    total_iterations: int
    beta: float = 1.0
    rng_seed: int = 0
    uniform: bool = False

    def __post_init__(self):
        if self.total_iterations < 1:
            raise ValueError("total_iterations must be >= 1")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


def alpha_at(t: float, schedule: BetaSchedule) -> float:
    """Shape parameter at iteration t: exp((t - 0.5 T) / (0.25 T))."""
    T = schedule.total_iterations
    if t < 0 or t > T:
        raise ValueError(f"iteration {t} outside [0, {T}]")
    return math.exp((t - 0.5 * T) / (0.25 * T))


def beta_pdf(z: float, alpha: float, beta: float) -> float:
    """Beta density z^(a-1) (1-z)^(b-1) / B(a, b) at z in [0, 1]."""
    if alpha <= 0 or beta <= 0:
        raise ValueError(f"shape parameters must be positive, got ({alpha}, {beta})")
    z = validate_scalar(z)
    if z == 0.0:
        if alpha < 1.0:
            return math.inf
        if alpha > 1.0:
            return 0.0
    if z == 1.0:
        if beta < 1.0:
            return math.inf
        if beta > 1.0:
            return 0.0
    log_b = math.lgamma(alpha) + math.lgamma(beta) - math.lgamma(alpha + beta)
    log_pdf = -log_b
    if alpha != 1.0:
        log_pdf += (alpha - 1.0) * math.log(z)
    if beta != 1.0:
        log_pdf += (beta - 1.0) * math.log1p(-z)
    return math.exp(log_pdf)


def sample_scalar(t: float, schedule: BetaSchedule, rng: np.random.Generator) -> float:
    """One z draw from the schedule at iteration t.

    For beta=1 the inverse CDF is closed form, z = u^(1/alpha), which keeps
    the draw exactly reproducible from the generator stream.
    """
    if schedule.uniform:
        return float(rng.uniform(0.0, 1.0))
    alpha = alpha_at(t, schedule)
    if schedule.beta == 1.0:
        u = rng.uniform(0.0, 1.0)
        return float(u ** (1.0 / alpha))
    return float(rng.beta(alpha, schedule.beta))


def sample_vector(k: int, rng: np.random.Generator) -> DomainnessVector:
    """Uniform draw on the (k-1)-simplex via normalized exponential spacings."""
    if k < 2:
        raise ValueError(f"simplex sampling needs k >= 2, got {k}")
    e = rng.exponential(scale=1.0, size=k)
    return validate_vector(e / e.sum())


def one_hot_vector(k: int, index: int) -> DomainnessVector:
    """Vertex of the simplex: all mass on one target domain."""
    if not 0 <= index < k:
        raise ValueError(f"one-hot index {index} outside [0, {k})")
    vals = [0.0] * k
    vals[index] = 1.0
    return DomainnessVector(tuple(vals))
