"""Noisy quality judgements by authors and referees.

Authors see ``q * xi`` with ``xi ~ N(1, alpha / q**lambda)``: better
manuscripts come from better authors, who judge their own work more
accurately. Referees see ``q * zeta`` with ``zeta ~ N(1, beta * k**gamma)``
where ``k`` is how many manuscripts that referee handles this round.

The scalar functions follow the per-manuscript contracts; the ``*_many``
variants are what the engine calls on whole rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quality import Manuscript


class PoolTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class EstimationParams:
    alpha: float = 1.0
    lam: float = 0.8
    q_floor: float = 0.1

    def __post_init__(self):
        if self.alpha < 0 or self.lam < 0 or self.q_floor <= 0:
            raise ValueError("need alpha >= 0, lambda >= 0, q_floor > 0")

    def variance(self, q):
        """Variance of the author noise factor at true quality ``q``."""
        return self.alpha / np.maximum(q, self.q_floor) ** self.lam


@dataclass(frozen=True)
class ReviewParams:
    beta: float = 0.1
    gamma_exp: float = 0.58
    referees_per_manuscript: int = 2

    def __post_init__(self):
        if self.beta < 0 or self.gamma_exp <= 0 or self.referees_per_manuscript < 1:
            raise ValueError("need beta >= 0, gamma > 0, referees_per_manuscript >= 1")

    def variance(self, k):
        """Variance of the review noise factor for a referee with load ``k``."""
        return self.beta * np.asarray(k, dtype=float) ** self.gamma_exp


@dataclass
class RefereePool:
    size: int
    loads: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("referee pool must be non-empty")
        if self.loads is None:
            self.loads = np.zeros(self.size, dtype=np.int64)

    def reset(self) -> None:
        self.loads[:] = 0


@dataclass(frozen=True)
class ReviewScores:
    score_1: float
    score_2: float
    referee_1: int
    referee_2: int

    @property
    def aggregate(self) -> float:
        return (self.score_1 + self.score_2) / 2


def estimate_many(q: np.ndarray, p: EstimationParams, rng: np.random.Generator) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if p.alpha == 0:
        return q.copy()
    xi = 1.0 + np.sqrt(p.variance(q)) * rng.standard_normal(q.shape)
    return np.maximum(q * xi, 0.0)


def estimate_quality(m: Manuscript, p: EstimationParams, rng: np.random.Generator) -> float:
    return float(estimate_many(np.array([m.true_quality]), p, rng)[0])


def draw_referees(count: int, pool_size: int, per_manuscript: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``per_manuscript`` distinct referees for each of ``count`` rows.

    Row-wise sampling without replacement: pick ``j`` draws from the
    ``pool_size - j`` referees not yet chosen, then shift past the chosen
    ids in ascending order.
    """
    if pool_size < per_manuscript:
        raise PoolTooSmall(
            f"referee pool of {pool_size} cannot supply {per_manuscript} distinct referees"
        )
    out = np.empty((count, per_manuscript), dtype=np.int64)
    for j in range(per_manuscript):
        v = rng.integers(0, pool_size - j, size=count)
        if j:
            for c in np.sort(out[:, :j], axis=1).T:
                v += v >= c
        out[:, j] = v
    return out


def assign_referees(pool: RefereePool, manuscripts: list, rng: np.random.Generator,
                    per_manuscript: int = 2) -> list[tuple[int, ...]]:
    pairs = draw_referees(len(manuscripts), pool.size, per_manuscript, rng)
    pool.loads += np.bincount(pairs.ravel(), minlength=pool.size)
    return [tuple(int(r) for r in row) for row in pairs]


def review_many(q: np.ndarray, loads: np.ndarray, p: ReviewParams, rng: np.random.Generator) -> np.ndarray:
    """Scores of shape ``loads.shape`` for manuscripts ``q`` (one row each)."""
    q = np.asarray(q, dtype=float)
    loads = np.asarray(loads)
    if p.beta == 0:
        return np.repeat(q[:, None], loads.shape[1], axis=1)
    zeta = 1.0 + np.sqrt(p.variance(loads)) * rng.standard_normal(loads.shape)
    return np.maximum(q[:, None] * zeta, 0.0)


def review_manuscript(m: Manuscript, referee_loads: tuple[int, int], p: ReviewParams,
                      rng: np.random.Generator, referees: tuple[int, int] = (0, 1)) -> ReviewScores:
    if min(referee_loads) < 1:
        raise ValueError("referee loads must include the current assignment")
    s = review_many(np.array([m.true_quality]), np.array([referee_loads]), p, rng)[0]
    return ReviewScores(float(s[0]), float(s[1]), referees[0], referees[1])
