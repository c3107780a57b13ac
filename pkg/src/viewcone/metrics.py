"""Trajectory similarity and safety metrics."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNormalizationError
from .sim import Trajectory

__all__ = [
    "MetricSummary",
    "discrete_frechet",
    "normalized_frechet",
    "proximity_rate",
    "summarize",
]


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    min: float
    max: float
    n: int


def _as_polyline(pts) -> np.ndarray:
    arr = np.asarray(pts, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError("polyline must be a non-empty (n, d) array")
    return arr


def discrete_frechet(p, q) -> float:
    """Discrete Frechet distance between two point sequences.

    Dynamic program over the coupling table, swept by anti-diagonals so each
    wavefront is a vectorized update.  Symmetric in its arguments.
    """
    P = _as_polyline(p)
    Q = _as_polyline(q)
    n, m = len(P), len(Q)
    diff = P[:, None, :] - Q[None, :, :]
    D = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))

    prev1 = None  # dp values on diagonal d-1
    prev2 = None  # dp values on diagonal d-2
    cur = None
    for d in range(n + m - 1):
        lo = max(0, d - (m - 1))
        hi = min(n - 1, d)
        ii = np.arange(lo, hi + 1)
        jj = d - ii
        cell = D[ii, jj]
        if d == 0:
            cur = cell
        else:
            lo1 = max(0, d - 1 - (m - 1))
            reach = np.full(ii.shape, np.inf)
            has_up = ii >= 1
            reach[has_up] = prev1[ii[has_up] - 1 - lo1]
            has_left = jj >= 1
            left = prev1[ii[has_left] - lo1]
            reach[has_left] = np.minimum(reach[has_left], left)
            if d >= 2:
                lo2 = max(0, d - 2 - (m - 1))
                has_diag = has_up & has_left
                diag = prev2[ii[has_diag] - 1 - lo2]
                reach[has_diag] = np.minimum(reach[has_diag], diag)
            cur = np.maximum(cell, reach)
        prev2, prev1 = prev1, cur
    return float(cur[0])


def normalized_frechet(p, q, start: tuple[float, float], goal: tuple[float, float]) -> float:
    """Discrete Frechet distance as a percentage of the start-goal distance."""
    norm = math.hypot(goal[0] - start[0], goal[1] - start[1])
    if norm == 0.0:
        raise DegenerateNormalizationError("start and goal coincide")
    return 100.0 * discrete_frechet(p, q) / norm


def proximity_rate(traj: Trajectory, threshold: float) -> float:
    """Fraction of timesteps spent within ``threshold`` of any obstacle center."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    if not traj.scenario.obstacles:
        return 0.0
    close = 0
    for st in traj.steps:
        dmin = min(
            math.hypot(st.state.p - x, st.state.q - y)
            for x, y in (o.position_at(st.t) for o in traj.scenario.obstacles)
        )
        if dmin < threshold:
            close += 1
    return close / len(traj.steps)


def summarize(values) -> MetricSummary:
    """Population mean/std with extremes; values must be non-empty."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("values must be non-empty")
    return MetricSummary(
        mean=float(arr.mean()),
        std=float(arr.std()),
        min=float(arr.min()),
        max=float(arr.max()),
        n=int(arr.size),
    )
