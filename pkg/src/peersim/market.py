"""Journals, quartile rankings, targeting and acceptance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

QUARTILE_FRACTIONS = (0.10, 0.25, 0.50)


class EmptyHistory(RuntimeError):
    pass


@dataclass
class Journal:
    id: int
    capacity: int
    published: list[tuple[int, np.ndarray]] = field(default_factory=list)
    current_quartile: int = 4
    _total: float = 0.0
    _count: int = 0

    def publish(self, issue: int, qualities) -> None:
        qualities = np.asarray(qualities, dtype=float)
        if len(qualities) > self.capacity:
            raise ValueError(f"journal {self.id}: {len(qualities)} articles exceed capacity {self.capacity}")
        self.published.append((issue, qualities))
        self._total += float(qualities.sum())
        self._count += len(qualities)

    @property
    def article_count(self) -> int:
        return self._count

    @property
    def cumulative_avg_quality(self) -> float:
        return self._total / self._count if self._count else math.nan

    def recomputed_avg_quality(self) -> float:
        allq = np.concatenate([q for _, q in self.published]) if self.published else np.empty(0)
        return float(allq.mean()) if len(allq) else math.nan


@dataclass(frozen=True)
class Thresholds:
    theta1: float
    theta2: float
    theta3: float

    def __post_init__(self):
        if not self.theta1 >= self.theta2 >= self.theta3:
            raise ValueError(f"thresholds out of order: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.theta3])


@dataclass(frozen=True)
class QuartileAssignment:
    quartile_of: dict[int, int]
    sizes: tuple[int, int, int, int]

    def members(self, quartile: int) -> list[int]:
        return sorted(j for j, qt in self.quartile_of.items() if qt == quartile)

    def as_array(self, n_journals: int) -> np.ndarray:
        out = np.empty(n_journals, dtype=np.int64)
        for j, qt in self.quartile_of.items():
            out[j] = qt
        return out


def quartile_sizes(n_journals: int) -> tuple[int, int, int, int]:
    cuts = [math.ceil(round(f * n_journals, 9)) for f in QUARTILE_FRACTIONS]
    return (cuts[0], cuts[1] - cuts[0], cuts[2] - cuts[1], n_journals - cuts[2])


def assign_by_order(order: list[int]) -> QuartileAssignment:
    """Quartiles for journals listed best first."""
    sizes = quartile_sizes(len(order))
    quartile_of = {}
    pos = 0
    for qt, size in enumerate(sizes, start=1):
        for j in order[pos:pos + size]:
            quartile_of[j] = qt
        pos += size
    return QuartileAssignment(quartile_of, sizes)


def update_rankings(journals: list[Journal]) -> tuple[QuartileAssignment, Thresholds]:
    empty = [j.id for j in journals if j.article_count == 0]
    if empty:
        raise EmptyHistory(f"journals {empty} have published nothing yet")
    ranked = sorted(journals, key=lambda j: (-j.cumulative_avg_quality, j.id))
    assignment = assign_by_order([j.id for j in ranked])
    for j in journals:
        j.current_quartile = assignment.quartile_of[j.id]
    # theta_i: the lowest journal at or above quartile i; equals theta_{i-1} if Q_i is empty
    cum = np.cumsum(assignment.sizes[:3])
    thetas = [ranked[max(c, 1) - 1].cumulative_avg_quality for c in cum]
    return assignment, Thresholds(*thetas)


def target_quartiles(estimates: np.ndarray, thresholds: Thresholds) -> np.ndarray:
    """Highest quartile whose threshold the estimate reaches (4 below theta3)."""
    th = thresholds.as_array()
    return 1 + (np.asarray(estimates)[:, None] < th[None, :]).sum(axis=1)


def select_targets(
    estimates: np.ndarray,
    thresholds: Thresholds,
    quartile_of: np.ndarray,
    excluded: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized journal choice; ``-1`` where nothing is reachable.

    ``quartile_of[j]`` is journal ``j``'s quartile; ``excluded`` is a
    (manuscripts x journals) mask of journals that already rejected each
    manuscript. A manuscript draws uniformly among the open journals of its
    target quartile, falling through to lower quartiles when all are closed.
    """
    m = len(estimates)
    u = rng.random(m)
    target = target_quartiles(estimates, thresholds)
    onehot = (quartile_of[:, None] == np.arange(1, 5)[None, :]).astype(np.float32)
    sizes = onehot.sum(axis=0).astype(np.int64)
    closed = (excluded.astype(np.float32) @ onehot).astype(np.int64)
    counts = sizes[None, :] - closed
    eligible = (counts > 0) & (np.arange(1, 5)[None, :] >= target[:, None])
    has = eligible.any(axis=1)
    eff = np.where(has, eligible.argmax(axis=1) + 1, 0)
    chosen = np.full(m, -1, dtype=np.int64)
    rows = np.nonzero(has)[0]
    if len(rows) == 0:
        return chosen
    c = counts[rows, eff[rows] - 1]
    k = np.minimum((u[rows] * c).astype(np.int64), c - 1)

    # the k-th open journal (ascending id) of the effective quartile
    members = np.full((4, max(int(sizes.max()), 1)), -1, dtype=np.int64)
    for qt in range(4):
        ids = np.nonzero(quartile_of == qt + 1)[0]
        members[qt, :len(ids)] = ids
    full = closed[rows, eff[rows] - 1] == 0
    fr = rows[full]
    chosen[fr] = members[eff[fr] - 1, k[full]]
    pr = rows[~full]
    if len(pr):
        in_q = ~excluded[pr] & (quartile_of[None, :] == eff[pr, None])
        rank = np.cumsum(in_q, axis=1) - 1
        chosen[pr] = (in_q & (rank == k[~full][:, None])).argmax(axis=1)
    return chosen


def select_target_journal(
    estimate: float,
    thresholds: Thresholds,
    assignment: QuartileAssignment,
    excluded: Iterable[int],
    rng: np.random.Generator,
) -> Optional[int]:
    n_journals = len(assignment.quartile_of)
    mask = np.zeros((1, n_journals), dtype=bool)
    for j in excluded:
        mask[0, j] = True
    j = select_targets(np.array([estimate]), thresholds, assignment.as_array(n_journals), mask, rng)[0]
    return None if j < 0 else int(j)


def accept_many(journal_ids: np.ndarray, scores: np.ndarray, ids: np.ndarray, capacity: int) -> np.ndarray:
    """Boolean acceptance mask: top ``capacity`` per journal by (score desc, id asc)."""
    order = np.lexsort((ids, -scores, journal_ids))
    js = journal_ids[order]
    starts = np.r_[0, np.nonzero(np.diff(js))[0] + 1]
    group_start = np.repeat(starts, np.diff(np.r_[starts, len(js)]))
    accepted = np.zeros(len(ids), dtype=bool)
    accepted[order] = (np.arange(len(js)) - group_start) < capacity
    return accepted


def journal_accept(journal: Journal, submissions: list[tuple[int, float]],
                   issue: Optional[int] = None,
                   qualities: Optional[dict[int, float]] = None) -> tuple[list[int], list[int]]:
    """Accept the best-scored submissions up to capacity.

    When ``issue`` and ``qualities`` (true quality per manuscript id) are
    given, the accepted articles are published in the journal's history.
    """
    ranked = sorted(submissions, key=lambda s: (-s[1], s[0]))
    accepted = [mid for mid, _ in ranked[:journal.capacity]]
    rejected = [mid for mid, _ in ranked[journal.capacity:]]
    if issue is not None and qualities is not None:
        journal.publish(issue, [qualities[mid] for mid in accepted])
    return accepted, rejected
