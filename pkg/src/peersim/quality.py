"""Latent manuscript quality.

Quality follows a gamma distribution with a fixed mean. The shape is tuned
so that the expected number of manuscripts above the high-quality threshold
stays at a fixed count ``H`` however many manuscripts are generated: for a
batch of ``n`` the upper tail mass above the threshold is set to ``H / n``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special, stats

SHAPE_MIN = 1e-3
SHAPE_CAP = 1e6
TAIL_TOL = 1e-6
MAX_ITER = 200


class CalibrationError(ValueError):
    """The requested high-quality count cannot be produced."""


class State(str, enum.Enum):
    PENDING = "pending"
    UNDER_REVIEW = "under-review"
    ACCEPTED = "accepted"
    ABANDONED = "abandoned"


@dataclass
class Manuscript:
    id: int
    true_quality: float
    author_estimate: float = 0.0
    rejection_count: int = 0
    rejected_by: set[int] = field(default_factory=set)
    state: State = State.PENDING
    accepted_by: Optional[int] = None
    birth_round: int = 0

    def reject(self, journal_id: int) -> None:
        self.rejected_by.add(journal_id)
        self.rejection_count = len(self.rejected_by)
        self.state = State.PENDING

    def accept(self, journal_id: int) -> None:
        self.accepted_by = journal_id
        self.state = State.ACCEPTED


@dataclass(frozen=True)
class QualityDistribution:
    mean: float
    shape: float
    scale: float
    high_quality_threshold: float
    target_high_count: int

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("shape and scale must be positive")
        if abs(self.shape * self.scale - self.mean) > 1e-9 * max(1.0, self.mean):
            raise ValueError("shape * scale must equal mean")

    @property
    def variance(self) -> float:
        return self.shape * self.scale**2

    @property
    def std(self) -> float:
        return math.sqrt(self.shape) * self.scale

    @property
    def skewness(self) -> float:
        return 2.0 / math.sqrt(self.shape)

    @property
    def achieved_tail_mass(self) -> float:
        return tail_mass(self, self.high_quality_threshold)

    def cdf(self, x):
        return stats.gamma.cdf(x, self.shape, scale=self.scale)

    def quantile(self, p):
        return stats.gamma.ppf(p, self.shape, scale=self.scale)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.gamma(self.shape, self.scale, size)


def _tail(shape: float, mean: float, threshold: float) -> float:
    return float(special.gammaincc(shape, threshold * shape / mean))


def tail_mass(dist: QualityDistribution, threshold: float) -> float:
    """P(q >= threshold), the upper regularized incomplete gamma function."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    if math.isinf(threshold):
        return 0.0
    return float(special.gammaincc(dist.shape, threshold / dist.scale))


def peak_tail(mean: float, threshold: float) -> tuple[float, float]:
    """Return ``(shape, tail)`` where the tail mass above ``threshold`` peaks.

    For ``threshold > mean`` the tail vanishes as shape -> 0 (all mass piles
    up at zero) and as shape -> inf (mass concentrates at the mean), with a
    single interior maximum. Calibration roots are taken on the decreasing
    branch to the right of this peak.
    """
    res = optimize.minimize_scalar(
        lambda u: -_tail(math.exp(u), mean, threshold),
        bounds=(math.log(SHAPE_MIN), math.log(SHAPE_CAP)),
        method="bounded",
        options={"xatol": 1e-10},
    )
    shape = math.exp(res.x)
    return shape, _tail(shape, mean, threshold)


def calibrate_distribution(
    mean: float, target_high_count: int, n: int, threshold: float
) -> QualityDistribution:
    """Solve for the gamma shape giving tail mass ``target_high_count / n``."""
    if mean <= 0:
        raise CalibrationError(f"mean must be positive, got {mean}")
    if n <= 0:
        raise CalibrationError(f"n must be positive, got {n}")
    if threshold <= mean:
        raise CalibrationError(
            f"threshold {threshold} must exceed the mean {mean} "
            "(high quality is a minority)"
        )
    if target_high_count <= 0:
        raise CalibrationError("degenerate: target_high_count must be positive")

    target = target_high_count / n
    lo, peak = peak_tail(mean, threshold)
    if target >= peak:
        raise CalibrationError(
            f"infeasible tail mass {target:.6g} (H={target_high_count}, n={n}); "
            f"feasible range for mean={mean}, threshold={threshold} is (0, {peak:.6g}), "
            f"i.e. H < {peak * n:.1f}"
        )
    hi = SHAPE_CAP
    if _tail(hi, mean, threshold) > target:
        raise CalibrationError(
            f"degenerate: tail mass {target:.3g} needs shape above cap {SHAPE_CAP:g}"
        )

    # bisection in log-shape; tail is strictly decreasing on [lo, hi]
    a, b = math.log(lo), math.log(hi)
    for _ in range(MAX_ITER):
        mid = 0.5 * (a + b)
        f = _tail(math.exp(mid), mean, threshold) - target
        if f == 0.0 or b - a < 1e-15:
            break
        if f > 0:
            a = mid
        else:
            b = mid
    shape = math.exp(0.5 * (a + b))
    dist = QualityDistribution(
        mean=mean,
        shape=shape,
        scale=mean / shape,
        high_quality_threshold=threshold,
        target_high_count=target_high_count,
    )
    if abs(dist.achieved_tail_mass - target) >= TAIL_TOL:
        raise CalibrationError(
            f"bisection did not converge: residual {dist.achieved_tail_mass - target:.3g}"
        )
    return dist


def generate_manuscripts(
    dist: QualityDistribution,
    n: int,
    round_index: int,
    rng: np.random.Generator,
    start_id: int = 0,
) -> list[Manuscript]:
    qualities = dist.sample(rng, n)
    return [
        Manuscript(id=start_id + i, true_quality=float(q), birth_round=round_index)
        for i, q in enumerate(qualities)
    ]
