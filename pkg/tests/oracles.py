"""Brute-force reference implementations used only by the tests."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate


def quad_tail(shape: float, mean: float, threshold: float) -> float:
    """Upper tail of the gamma density by adaptive quadrature."""
    scale = mean / shape
    logc = -math.lgamma(shape) - shape * math.log(scale)

    def pdf(x):
        return math.exp(logc + (shape - 1) * math.log(x) - x / scale)

    val, _ = integrate.quad(pdf, threshold, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def grid_calibrate(mean: float, high: int, n: int, threshold: float,
                   lo: float = 0.5, hi: float = 30.0, step: float = 0.01) -> tuple[float, float]:
    """Scan shape on a grid for the sign change, then refine by halving."""
    target = high / n
    grid = np.arange(lo, hi, step)
    vals = [quad_tail(s, mean, threshold) for s in grid]
    start = int(np.argmax(vals))  # decreasing branch only
    for i in range(start, len(grid) - 1):
        if vals[i] >= target > vals[i + 1]:
            a, b = grid[i], grid[i + 1]
            break
    else:
        raise AssertionError("no bracketing pair on the grid")
    for _ in range(60):
        m = 0.5 * (a + b)
        if quad_tail(m, mean, threshold) > target:
            a = m
        else:
            b = m
    shape = 0.5 * (a + b)
    return shape, mean / shape


def top_k(entries: list[tuple[int, float]], k: int) -> set[int]:
    """Exhaustive top-k by (score desc, id asc) using a plain comparison sort."""
    best = []
    for mid, score in entries:
        best.append((score, -mid, mid))
    best.sort(reverse=True)
    return {mid for _, _, mid in best[:k]}


def open_journals(estimate, thetas, quartile_of, excluded_row):
    """Journals a manuscript may draw from, per the fall-through rule."""
    target = 1
    for th in thetas:
        if estimate < th:
            target += 1
    for qt in range(target, 5):
        js = [j for j, q in enumerate(quartile_of) if q == qt and not excluded_row[j]]
        if js:
            return js
    return []
