"""End-to-end acceptance criteria, each at its stated tolerance and time budget.

Every test records a PASS/FAIL line, printed together at the end of the run.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from oracles import grid_calibrate, top_k
from peersim.actors import EstimationParams, ReviewParams, estimate_many, review_many
from peersim.cli import main
from peersim.engine import SimConfig, run_simulation
from peersim.experiments import SweepSpec, phase_summary, rises_then_declines, run_sweep
from peersim.quality import calibrate_distribution

pytestmark = pytest.mark.acceptance


def sig4(x, y):
    return f"{x:.4g}" == f"{y:.4g}"


def conserved(state, m):
    cfg = state.config
    assert state.generated_total == state.accepted_total + state.abandoned_total + state.in_flight
    for j in state.journals:
        assert len(j.published[-1][1]) <= cfg.capacity


def test_1_calibration(verdict):
    t0 = time.perf_counter()
    d = calibrate_distribution(4.0, 100, 2000, 8.0)
    elapsed = time.perf_counter() - t0
    o_shape, o_scale = grid_calibrate(4.0, 100, 2000, 8.0, lo=3.0, hi=4.0)
    tail_err = abs(d.achieved_tail_mass - 0.05)
    ok = tail_err < 1e-6 and sig4(d.shape, o_shape) and sig4(d.scale, o_scale) and elapsed < 1.0
    verdict("1 calibration", ok,
            f"shape={d.shape:.6f} (oracle {o_shape:.6f}) scale={d.scale:.6f} (oracle {o_scale:.6f}) "
            f"|tail-0.05|={tail_err:.1e} t={elapsed:.3f}s")
    assert ok


def _clamp_mean(q, sd):
    # E[q * max(xi, 0)] for xi ~ N(1, sd^2)
    return q * (1 + sd * stats.norm.pdf(1 / sd) - stats.norm.cdf(-1 / sd))


def test_2_unbiasedness(verdict):
    t0 = time.perf_counter()
    n = 100_000
    checked, notes, ok = 0, [], True
    est = EstimationParams(alpha=1.0, lam=0.8)
    rev = ReviewParams(beta=0.1, gamma_exp=0.58)
    cases = [("estimate", q, None, math.sqrt(est.variance(q))) for q in (2.0, 4.0, 8.0)]
    cases += [("review", q, k, math.sqrt(rev.variance(k))) for q in (2.0, 4.0, 8.0) for k in (1, 5, 20)]
    for i, (kind, q, k, sd) in enumerate(cases):
        rng = np.random.default_rng(1000 + i)
        if kind == "estimate":
            x = estimate_many(np.full(n, q), est, rng)
        else:
            x = review_many(np.full(n, q), np.full((n, 1), k), rev, rng)[:, 0]
        se = x.std(ddof=1) / math.sqrt(n)
        p_neg = stats.norm.cdf(-1 / sd)
        if p_neg < 1e-4:
            checked += 1
            good = abs(x.mean() - q) < 3 * se
        else:
            # the clamp at zero makes the raw mean biased; test against the clamped expectation
            good = abs(x.mean() - _clamp_mean(q, sd)) < 3 * se
        ok &= good
        if not good:
            notes.append(f"{kind} q={q} k={k}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 10
    verdict("2 unbiasedness", ok,
            f"{len(cases)} cases ({checked} with P(xi<0)<1e-4, rest vs clamp-corrected mean) "
            f"t={elapsed:.1f}s {' '.join(notes)}")
    assert ok


def test_3_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    mismatches = 0
    for seed in range(100):
        cfg = SimConfig(journals=4, capacity=2, new_per_round=20, high_quality_count=2, alpha=0.0,
                        beta=0.0, rounds=1, referees=10, seed=seed)
        last = run_simulation(cfg, observer=conserved).state.last
        for j in range(4):
            sel = last.journal == j
            expected = top_k(list(zip(last.ids[sel].tolist(), last.quality[sel].tolist())), 2)
            mismatches += set(last.ids[sel & last.accepted].tolist()) != expected
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 5
    verdict("3 oracle equivalence", ok, f"mismatches={mismatches}/400 t={elapsed:.2f}s")
    assert ok


def test_4_quartile_ordering(verdict):
    cfg = SimConfig()
    t0 = time.perf_counter()
    res = run_simulation(cfg, observer=conserved)
    elapsed = time.perf_counter() - t0
    qa = np.array([m.quartile_avg for m in res.metrics[20:]])
    bad = int((~np.all(np.diff(qa, axis=1) < 0, axis=1)).sum())
    ok = bad == 0 and elapsed < 30
    verdict("4 quartile ordering", ok,
            f"violations={bad}/{len(qa)} mean={np.round(qa.mean(axis=0), 3).tolist()} t={elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def full_sweep():
    spec = SweepSpec(base=SimConfig(), values=list(range(400, 5001, 200)), replications=5, warmup_issues=20)
    t0 = time.perf_counter()
    res = run_sweep(spec, workers=1)
    return res, time.perf_counter() - t0


def test_5_phase_transition(full_sweep, verdict):
    res, elapsed = full_sweep
    ns = np.array(res.spec.values)
    q4, q1 = res.column(4), res.column(1)
    low, high = ns <= 1800, ns >= 3600
    rho4 = stats.spearmanr(ns[low], q4[low]).statistic
    rho1 = stats.spearmanr(ns[high], q1[high]).statistic
    phases = phase_summary(res)
    n_rd = sum(rises_then_declines(p) for p in phases.values())
    ok = rho4 > 0.8 and rho1 < -0.8 and n_rd >= 3 and elapsed < 600
    verdict("5 phase transition", ok,
            f"spearman Q4(n<=1800)={rho4:.3f} Q1(n>=3600)={rho1:.3f} "
            f"rise->decline quartiles={n_rd}/4 {phases} t={elapsed:.0f}s")
    assert ok


def test_6_rejection_statistics(verdict):
    spec = SweepSpec(base=SimConfig(), values=[1000, 3000, 5000], replications=5, warmup_issues=20,
                     seed_base=6)
    t0 = time.perf_counter()
    res = run_sweep(spec, workers=1)
    elapsed = time.perf_counter() - t0
    mean_rej = [res.summary(v)["mean_rejections"] for v in spec.values]
    first = [res.summary(v)["first_time_accept_rate"] for v in spec.values]
    ok = (np.all(np.diff(mean_rej) > 0) and np.all(np.diff(first) < 0) and elapsed < 120)
    verdict("6 rejection statistics", ok,
            f"mean rejections={np.round(mean_rej, 3).tolist()} first-time={np.round(first, 3).tolist()} "
            f"t={elapsed:.0f}s")
    assert ok


def test_7_determinism(tmp_path, verdict):
    t0 = time.perf_counter()
    cfg = tmp_path / "default.cfg"
    cfg.write_text("seed = 2024\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    same_run = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
                   for f in ("issues.csv", "rejections.csv", "manifest"))
    sweep = ["sweep", "--config", str(cfg), "--param", "n", "--values", "400:1200:400", "--reps", "2",
             "--set", "rounds=40"]
    assert main(sweep + ["--workers", "1", "--out", str(tmp_path / "s1")]) == 0
    assert main(sweep + ["--workers", "2", "--out", str(tmp_path / "s2")]) == 0
    same_sweep = (tmp_path / "s1" / "sweep.csv").read_bytes() == (tmp_path / "s2" / "sweep.csv").read_bytes()
    elapsed = time.perf_counter() - t0
    ok = same_run and same_sweep and elapsed < 60
    verdict("7 determinism", ok, f"run identical={same_run} sweep serial==concurrent={same_sweep} t={elapsed:.1f}s")
    assert ok


def test_8_conservation(verdict):
    # the engine checks conservation and capacity after every round and raises on a violation,
    # so every run above (sweep workers included) was checked; this run adds the explicit observer
    # under the unlimited-rejection rule, which exercises the abandonment path differently
    rounds = 0

    def count(state, m):
        nonlocal rounds
        conserved(state, m)
        rounds += 1

    try:
        run_simulation(SimConfig(new_per_round=3000, high_quality_count=102, max_rejections=None, rounds=60),
                       observer=count)
        ok, detail = True, f"{rounds} observed rounds, zero violations"
    except AssertionError as exc:
        ok, detail = False, f"violation after {rounds} rounds: {exc}"
    verdict("8 conservation", ok, detail)
    assert ok
