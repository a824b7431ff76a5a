"""Support-point scenario reduction and scenario-quality scores."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from gridtwin.errors import DimensionMismatch, ValidationError
from gridtwin.scenario_engine.data import ScenarioSet

DIST_FLOOR = 1e-12
MM_TOL = 1e-6
MM_MAX_ITER = 200


def _flat(x) -> np.ndarray:
    if isinstance(x, ScenarioSet):
        return x.flat()
    a = np.asarray(x, dtype=float)
    return a[:, None] if a.ndim == 1 else a.reshape(a.shape[0], -1)


def _mean_pairwise(x: np.ndarray) -> float:
    """E||X - X'|| over all ordered pairs, including i == j."""
    n = len(x)
    if n < 2:
        return 0.0
    return 2.0 * pdist(x).sum() / (n * n)


def energy_distance(a, b) -> float:
    """2 E||X-Y|| - E||X-X'|| - E||Y-Y'|| between two empirical distributions."""
    x, y = _flat(a), _flat(b)
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(f"dimensions {x.shape[1]} and {y.shape[1]} differ")
    cross = cdist(x, y).mean()
    return max(0.0, float(2 * cross - _mean_pairwise(x) - _mean_pairwise(y)))


def variogram_score(scenarios, actual, p: float = 0.5) -> float:
    """Sum over component pairs i < j of (|a_i - a_j|^p - mean_s |s_i - s_j|^p)^2."""
    if p <= 0:
        raise ValidationError("variogram order must be positive")
    s = _flat(scenarios)
    a = np.asarray(actual, dtype=float).reshape(-1)
    if a.size != s.shape[1]:
        raise DimensionMismatch(f"actual has {a.size} components, scenarios {s.shape[1]}")
    iu = np.triu_indices(a.size, k=1)
    va = np.abs(a[:, None] - a[None, :])[iu] ** p
    vs = np.mean([np.abs(r[:, None] - r[None, :])[iu] ** p for r in s], axis=0)
    return float(np.sum((va - vs) ** 2))


@dataclass
class SupportResult:
    points: np.ndarray
    history: list          # energy distance after each iteration (index 0 = start)
    iterations: int
    converged: bool


def _objective(x, y, self_y):
    return 2 * cdist(x, y).mean() - _mean_pairwise(x) - self_y


def _mm_step(x, y):
    """One majorization-minimization update of all support points.

    Data points that coincide with a support point (distance below the floor)
    are left out of that point's weighted average.
    """
    n, N = len(x), len(y)
    dxy = cdist(x, y)
    near = dxy < DIST_FLOOR
    inv = np.where(near, 0.0, 1.0 / np.maximum(dxy, DIST_FLOOR))
    q = inv.sum(axis=1)
    pull = inv @ y
    diff = x[:, None, :] - x[None, :, :]
    dxx = np.linalg.norm(diff, axis=2)
    unit = np.where((dxx > DIST_FLOOR)[:, :, None], diff / np.maximum(dxx, DIST_FLOOR)[:, :, None], 0.0)
    push = (N / n) * unit.sum(axis=1)
    ok = q > 0
    out = x.copy()
    out[ok] = (pull[ok] + push[ok]) / q[ok, None]
    return out


def support_points_mm(data, k: int, seed: int, tol: float = MM_TOL,
                      max_iter: int = MM_MAX_ITER) -> SupportResult:
    y = _flat(data)
    N = len(y)
    if not 1 <= k <= N:
        raise ValidationError(f"need 1 <= k <= {N}")
    rng = np.random.default_rng(seed)
    x = y[np.sort(rng.choice(N, size=k, replace=False))].copy()
    self_y = _mean_pairwise(y)
    f = _objective(x, y, self_y)
    hist = [max(f, 0.0)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        full = _mm_step(x, y)
        cand = full
        fc = _objective(cand, y, self_y)
        step = 1.0
        # points sitting on data atoms make the surrogate inexact; back off
        while fc > f and step > 1e-6:
            step *= 0.5
            cand = x + step * (full - x)
            fc = _objective(cand, y, self_y)
        if fc > f:
            cand, fc = x, f
        assert fc <= f + 1e-12 * max(1.0, abs(f)), "energy distance increased"
        rel = (f - fc) / max(abs(f), 1e-300)
        x, f = cand, fc
        hist.append(max(f, 0.0))
        if rel < tol:
            converged = True
            break
    return SupportResult(x, hist, it, converged)


def support_points(scenarios: ScenarioSet, k: int, seed: int, tol: float = MM_TOL,
                   max_iter: int = MM_MAX_ITER) -> ScenarioSet:
    """``k`` equiprobable representatives chosen to minimize energy distance."""
    res = support_points_mm(scenarios, k, seed, tol, max_iter)
    vals = np.maximum(res.points, 0.0).reshape((k,) + scenarios.values.shape[1:])
    return ScenarioSet(vals, scenarios.assets, scenarios.step_minutes)
