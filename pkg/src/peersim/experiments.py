"""Parameter sweeps, replications and phase classification."""

from __future__ import annotations

import concurrent.futures as cf
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .engine import SimConfig, collect_rejection_stats, rejection_stats_between, run_simulation
from .rng import mix_seed

ALIASES = {"n": "new_per_round", "H": "high_quality_count", "gamma": "gamma_exp", "lambda": "lam"}

# H grows in proportion to n at low volume, then saturates slowly
HIGH_FRACTION = 0.05
PHASES = ("rising", "steady", "declining")


class SweepError(RuntimeError):
    pass


class InsufficientPoints(ValueError):
    pass


def default_high_quality(n: int) -> int:
    """Expected count of high-quality manuscripts among ``n`` new ones.

    Proportional (5% of ``n``) while submissions are few, then saturating
    at ``90 + 4 n / 1000`` clamped to [90, 160].
    """
    saturated = min(max(round(90 + 4 * n / 1000), 90), 160)
    return max(1, min(round(HIGH_FRACTION * n), saturated))


@dataclass
class SweepSpec:
    base: SimConfig
    values: Sequence
    swept_parameter: str = "n"
    replications: int = 5
    warmup_issues: int = 20
    seed_base: int = 0
    high_quality_schedule: Optional[Callable[[int], int]] = default_high_quality
    fixed_seed: Optional[int] = None  # use one seed for every run (testing)

    def __post_init__(self):
        self.swept_parameter = ALIASES.get(self.swept_parameter, self.swept_parameter)
        if self.swept_parameter not in {f.name for f in dataclasses.fields(SimConfig)}:
            raise ValueError(f"unknown sweep parameter {self.swept_parameter!r}")
        vals = list(self.values)
        if not vals:
            raise ValueError("sweep values must be non-empty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.warmup_issues < 0 or self.warmup_issues >= self.base.rounds:
            raise ValueError("warmup_issues must be in [0, rounds)")

    def seed_for(self, value, replication: int) -> int:
        if self.fixed_seed is not None:
            return self.fixed_seed
        return mix_seed(self.seed_base, int(round(value * 1000)), replication)

    def config_for(self, value, replication: int) -> SimConfig:
        changes = {self.swept_parameter: value, "seed": self.seed_for(value, replication)}
        if self.swept_parameter == "new_per_round" and self.high_quality_schedule is not None:
            changes["high_quality_count"] = self.high_quality_schedule(value)
        return self.base.replace(**changes)

    def points(self) -> list[tuple[object, int]]:
        return [(v, r) for v in self.values for r in range(self.replications)]


@dataclass(frozen=True)
class SweepRow:
    value: object
    replication: int
    seed: int
    quartile_avg: tuple[float, float, float, float]
    mean_rejections: float
    first_time_accept_rate: float


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[SweepRow]

    def column(self, quartile: int) -> np.ndarray:
        """Replication means of one quartile, in sweep order."""
        return np.array([self.summary(v)["mean"][quartile - 1] for v in self.spec.values])

    def rows_for(self, value) -> list[SweepRow]:
        return [r for r in self.rows if r.value == value]

    def summary(self, value) -> dict:
        rows = self.rows_for(value)
        qa = np.array([r.quartile_avg for r in rows])
        rej = np.array([r.mean_rejections for r in rows])
        first = np.array([r.first_time_accept_rate for r in rows])
        ddof = 1 if len(rows) > 1 else 0
        return {
            "mean": qa.mean(axis=0),
            "std": qa.std(axis=0, ddof=ddof),
            "mean_rejections": float(rej.mean()),
            "first_time_accept_rate": float(first.mean()),
        }


def summarize_run(config: SimConfig, warmup: int) -> SweepRow:
    res = run_simulation(config)
    qa = np.array([m.quartile_avg for m in res.metrics[warmup:]])
    before = res.metrics[warmup - 1].rejection_histogram if warmup else np.zeros_like(res.state.histogram)
    stats = rejection_stats_between(before, collect_rejection_stats(res.state).accepted)
    return SweepRow(
        value=None,
        replication=-1,
        seed=config.seed,
        quartile_avg=tuple(float(x) for x in np.nanmean(qa, axis=0)),
        mean_rejections=stats.mean_rejections,
        first_time_accept_rate=stats.first_time_rate,
    )


def _run_point(spec: SweepSpec, value, replication: int) -> SweepRow:
    row = summarize_run(spec.config_for(value, replication), spec.warmup_issues)
    return dataclasses.replace(row, value=value, replication=replication)


def run_sweep(spec: SweepSpec, workers: Optional[int] = 1) -> SweepResult:
    """Run every (value, replication) pair; ``workers > 1`` uses processes.

    Rows always come back in (value, replication) order.
    """
    points = spec.points()
    for v, r in points:
        spec.config_for(v, r).validate()
    if workers is None or workers > 1:
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_point, spec, v, r) for v, r in points]
            rows = []
            for (v, r), fut in zip(points, futures):
                try:
                    rows.append(fut.result())
                except Exception as exc:
                    raise SweepError(
                        f"run failed at {spec.swept_parameter}={v}, replication={r}, "
                        f"seed={spec.seed_for(v, r)}: {exc}"
                    ) from exc
    else:
        rows = []
        for v, r in points:
            try:
                rows.append(_run_point(spec, v, r))
            except Exception as exc:
                raise SweepError(
                    f"run failed at {spec.swept_parameter}={v}, replication={r}, "
                    f"seed={spec.seed_for(v, r)}: {exc}"
                ) from exc
    return SweepResult(spec, rows)


def local_slopes(y: Sequence[float], window: int = 3) -> np.ndarray:
    """Least-squares slope (per sweep step) over each sliding window."""
    y = np.asarray(y, dtype=float)
    x = np.arange(window) - (window - 1) / 2
    return np.array([np.dot(x, y[i:i + window]) / np.dot(x, x) for i in range(len(y) - window + 1)])


def classify_phases(y: Sequence[float], window: int = 3, rel_threshold: float = 0.01) -> list[str]:
    """Collapse the signs of local slopes into a phase sequence."""
    if len(y) < 6:
        raise InsufficientPoints(f"need at least 6 sweep points, got {len(y)}")
    slopes = local_slopes(y, window)
    tol = rel_threshold * abs(float(np.mean(y)))
    labels = np.where(slopes > tol, "rising", np.where(slopes < -tol, "declining", "steady"))
    phases = [str(labels[0])]
    for lab in labels[1:]:
        if lab != phases[-1]:
            phases.append(str(lab))
    return phases


def phase_summary(result: SweepResult) -> dict[int, list[str]]:
    return {qt: classify_phases(result.column(qt)) for qt in (1, 2, 3, 4)}


def rises_then_declines(phases: list[str]) -> bool:
    return "rising" in phases and "declining" in phases[phases.index("rising"):]
