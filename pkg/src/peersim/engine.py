"""The round loop.

One round is one issue for every journal: new manuscripts join the
resubmissions carried over from the previous round, authors pick target
journals, referees score, journals take their best-scored submissions,
and the rankings are refreshed from the published record.

The in-flight pool is kept as parallel numpy arrays in manuscript-id order;
per-manuscript objects would dominate the run time at ``n`` in the
thousands.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng as rngmod
from .actors import EstimationParams, RefereePool, ReviewParams, draw_referees, estimate_many, review_many
from .market import (
    EmptyHistory,
    Journal,
    QuartileAssignment,
    Thresholds,
    accept_many,
    assign_by_order,
    select_targets,
    update_rankings,
)
from .quality import CalibrationError, QualityDistribution, calibrate_distribution
from .rng import Stage


class ConfigError(ValueError):
    """Invalid simulation parameters; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class SimConfig:
    journals: int = 40
    new_per_round: int = 2000
    capacity: int = 10
    referees: int = 200
    alpha: float = 1.0
    lam: float = 0.8
    beta: float = 0.1
    gamma_exp: float = 0.58
    mean_quality: float = 4.0
    high_quality_count: int = 100
    bootstrap_theta1: float = 10.0
    max_rejections: Optional[int] = 5  # None: unlimited
    rounds: int = 100
    seed: int = 0
    q_floor: float = 0.1
    referees_per_manuscript: int = 2

    def validate(self) -> "SimConfig":
        for key in ("journals", "new_per_round", "capacity", "referees", "rounds",
                    "high_quality_count", "referees_per_manuscript"):
            if getattr(self, key) < 1:
                raise ConfigError(key, f"must be a positive integer, got {getattr(self, key)}")
        if self.max_rejections is not None and self.max_rejections < 1:
            raise ConfigError("max_rejections", "must be positive or 'unlimited'")
        for key in ("alpha", "lam", "beta"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "must be non-negative")
        if self.gamma_exp <= 0:
            raise ConfigError("gamma_exp", "must be positive")
        if self.q_floor <= 0:
            raise ConfigError("q_floor", "must be positive")
        if self.mean_quality <= 0:
            raise ConfigError("mean_quality", "must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        if self.referees < self.referees_per_manuscript:
            raise ConfigError("referees", f"need at least {self.referees_per_manuscript} referees")
        try:
            self.distribution()
        except CalibrationError as exc:
            raise ConfigError("high_quality_count", str(exc)) from None
        return self

    def distribution(self) -> QualityDistribution:
        return calibrate_distribution(
            self.mean_quality, self.high_quality_count, self.new_per_round, self.bootstrap_theta1
        )

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    @property
    def histogram_size(self) -> int:
        # an accepted manuscript has fewer rejections than the abandonment limit
        return (self.max_rejections if self.max_rejections is not None else self.journals) + 1


@dataclass
class RoundMetrics:
    issue: int
    quartile_avg: tuple[float, float, float, float]
    total_submissions: int
    accepted_count: int
    abandoned_count: int
    rejection_histogram: np.ndarray  # cumulative over the run
    generated_total: int = 0
    accepted_total: int = 0
    abandoned_total: int = 0
    in_flight: int = 0
    thresholds: Optional[Thresholds] = None


@dataclass
class RoundRecord:
    """What happened to each submission in the latest round (id order)."""

    ids: np.ndarray
    quality: np.ndarray
    estimate: np.ndarray
    journal: np.ndarray  # -1: no reachable journal
    referees: np.ndarray  # submitted rows only
    aggregate: np.ndarray  # submitted rows only
    accepted: np.ndarray  # bool, all rows
    quartile_of: np.ndarray


@dataclass
class SimState:
    config: SimConfig
    dist: QualityDistribution
    journals: list[Journal]
    assignment: QuartileAssignment
    thresholds: Thresholds
    referees: RefereePool
    round: int = 0
    next_id: int = 0
    # in-flight pool, ascending id
    ids: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    quality: np.ndarray = field(default_factory=lambda: np.empty(0))
    rejections: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    birth: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    excluded: np.ndarray = None
    histogram: np.ndarray = None
    accepted_total: int = 0
    abandoned_total: int = 0
    # rejection counts of abandoned manuscripts, by count
    abandoned_histogram: np.ndarray = None
    last: Optional[RoundRecord] = None

    @property
    def generated_total(self) -> int:
        return self.next_id

    @property
    def in_flight(self) -> int:
        return len(self.ids)


def bootstrap(config: SimConfig) -> SimState:
    """Initial market: journals in id blocks, thresholds from quantiles.

    Round 0 runs with theta1 = ``bootstrap_theta1``, theta2 = the 75th and
    theta3 = the 50th percentile of the calibrated quality distribution.
    Rankings switch to the published record once every journal has
    published at least one article.
    """
    config.validate()
    dist = config.distribution()
    journals = [Journal(id=j, capacity=config.capacity) for j in range(config.journals)]
    assignment = assign_by_order(list(range(config.journals)))
    for j in journals:
        j.current_quartile = assignment.quartile_of[j.id]
    q75, q50 = dist.quantile([0.75, 0.50])
    thresholds = Thresholds(config.bootstrap_theta1, max(min(float(q75), config.bootstrap_theta1), float(q50)), float(q50))
    size = config.histogram_size
    return SimState(
        config=config,
        dist=dist,
        journals=journals,
        assignment=assignment,
        thresholds=thresholds,
        referees=RefereePool(config.referees),
        excluded=np.zeros((0, config.journals), dtype=bool),
        histogram=np.zeros(size, dtype=np.int64),
        abandoned_histogram=np.zeros(size + 1, dtype=np.int64),
    )


def _quartile_means(journal_ids: np.ndarray, qualities: np.ndarray, quartile_of: np.ndarray) -> tuple:
    qt = quartile_of[journal_ids]
    out = []
    for k in (1, 2, 3, 4):
        sel = qualities[qt == k]
        out.append(float(sel.mean()) if len(sel) else math.nan)
    return tuple(out)


class InvariantViolation(AssertionError):
    pass


def _check_invariants(state: SimState) -> None:
    # cheap enough to run every round, so every run is checked
    cfg = state.config
    if state.generated_total != state.accepted_total + state.abandoned_total + state.in_flight:
        raise InvariantViolation(
            f"round {state.round}: generated {state.generated_total} != accepted {state.accepted_total}"
            f" + abandoned {state.abandoned_total} + in flight {state.in_flight}")
    for j in state.journals:
        if j.published and len(j.published[-1][1]) > cfg.capacity:
            raise InvariantViolation(f"round {state.round}: journal {j.id} over capacity")


def run_round(state: SimState) -> RoundMetrics:
    cfg = state.config
    t = state.round
    seed = cfg.seed
    n_j = cfg.journals

    # (1) referee loads count this round's assignments only
    state.referees.reset()

    # (2) new manuscripts
    new_q = state.dist.sample(rngmod.stream(seed, t, Stage.GENERATE), cfg.new_per_round)
    new_ids = np.arange(state.next_id, state.next_id + cfg.new_per_round, dtype=np.int64)
    state.next_id += cfg.new_per_round

    # (3) pool with carried-over rejections (ids stay ascending)
    ids = np.concatenate([state.ids, new_ids])
    q = np.concatenate([state.quality, new_q])
    rej = np.concatenate([state.rejections, np.zeros(cfg.new_per_round, np.int64)])
    birth = np.concatenate([state.birth, np.full(cfg.new_per_round, t, np.int64)])
    excluded = np.concatenate([state.excluded, np.zeros((cfg.new_per_round, n_j), bool)])
    total_submissions = len(ids)

    # (4) author estimates and targeting
    est_params = EstimationParams(cfg.alpha, cfg.lam, cfg.q_floor)
    q_hat = estimate_many(q, est_params, rngmod.stream(seed, t, Stage.ESTIMATE))
    quartile_of = state.assignment.as_array(n_j)
    target = select_targets(q_hat, state.thresholds, quartile_of, excluded,
                            rngmod.stream(seed, t, Stage.TARGET))
    stranded = target < 0
    sub = ~stranded

    # (5) referees then reviews, in id order
    pairs = draw_referees(int(sub.sum()), cfg.referees, cfg.referees_per_manuscript,
                          rngmod.stream(seed, t, Stage.ASSIGN))
    state.referees.loads += np.bincount(pairs.ravel(), minlength=cfg.referees)
    loads = state.referees.loads[pairs]
    scores = review_many(q[sub], loads, ReviewParams(cfg.beta, cfg.gamma_exp, cfg.referees_per_manuscript),
                         rngmod.stream(seed, t, Stage.REVIEW))
    aggregate = scores.mean(axis=1)

    # (6) acceptance
    sub_idx = np.nonzero(sub)[0]
    acc_sub = accept_many(target[sub], aggregate, ids[sub], cfg.capacity)
    acc_idx = sub_idx[acc_sub]
    rej_idx = sub_idx[~acc_sub]
    acc_journal = target[acc_idx]
    for j in state.journals:
        j.publish(t, q[acc_idx[acc_journal == j.id]])
    state.histogram += np.bincount(rej[acc_idx], minlength=len(state.histogram))[:len(state.histogram)]
    quartile_avg = _quartile_means(acc_journal, q[acc_idx], quartile_of)

    accepted_mask = np.zeros(len(ids), dtype=bool)
    accepted_mask[acc_idx] = True
    state.last = RoundRecord(ids, q, q_hat, target, pairs, aggregate, accepted_mask, quartile_of)

    # (7) rejections; abandon at the limit or when no journal is left
    rej[rej_idx] += 1
    excluded[rej_idx, target[rej_idx]] = True
    keep = np.zeros(len(ids), dtype=bool)
    keep[rej_idx] = True
    if cfg.max_rejections is not None:
        keep &= rej < cfg.max_rejections
    abandoned = np.nonzero(~keep & ~accepted_mask)[0]
    state.abandoned_histogram += np.bincount(rej[abandoned], minlength=len(state.abandoned_histogram))[
        :len(state.abandoned_histogram)]
    state.accepted_total += len(acc_idx)
    state.abandoned_total += len(abandoned)
    state.ids, state.quality, state.rejections = ids[keep], q[keep], rej[keep]
    state.birth, state.excluded = birth[keep], excluded[keep]

    _check_invariants(state)

    # (8) rankings for the next round
    try:
        state.assignment, state.thresholds = update_rankings(state.journals)
    except EmptyHistory:
        pass  # keep the bootstrap layout until every journal has published

    state.round += 1
    return RoundMetrics(
        issue=t,
        quartile_avg=quartile_avg,
        total_submissions=total_submissions,
        accepted_count=len(acc_idx),
        abandoned_count=len(abandoned),
        rejection_histogram=state.histogram.copy(),
        generated_total=state.generated_total,
        accepted_total=state.accepted_total,
        abandoned_total=state.abandoned_total,
        in_flight=state.in_flight,
        thresholds=state.thresholds,
    )


@dataclass
class SimulationResult:
    config: SimConfig
    dist: QualityDistribution
    metrics: list[RoundMetrics]
    journals: list[Journal]
    state: SimState


def run_simulation(config: SimConfig,
                   observer: Optional[Callable[[SimState, RoundMetrics], None]] = None) -> SimulationResult:
    """Bootstrap and run ``config.rounds`` issues (issue 0 uses the bootstrap thresholds)."""
    state = bootstrap(config)
    metrics = []
    for _ in range(config.rounds):
        m = run_round(state)
        if observer is not None:
            observer(state, m)
        metrics.append(m)
    return SimulationResult(config, state.dist, metrics, state.journals, state)


@dataclass(frozen=True)
class RejectionStats:
    accepted: np.ndarray  # accepted[k]: accepted after k rejections
    abandoned: int

    @property
    def total_accepted(self) -> int:
        return int(self.accepted.sum())

    @property
    def mean_rejections(self) -> float:
        tot = self.accepted.sum()
        return float((np.arange(len(self.accepted)) * self.accepted).sum() / tot) if tot else math.nan

    @property
    def first_time_rate(self) -> float:
        tot = self.accepted.sum()
        return float(self.accepted[0] / tot) if tot else math.nan


def collect_rejection_stats(state: SimState) -> RejectionStats:
    return RejectionStats(state.histogram.copy(), state.abandoned_total)


def rejection_stats_between(before: np.ndarray, after: np.ndarray) -> RejectionStats:
    """Stats for manuscripts accepted between two cumulative histograms."""
    return RejectionStats(after - before, 0)
