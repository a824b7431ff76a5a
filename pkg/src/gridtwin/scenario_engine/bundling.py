"""Intermittency-index bundling of assets and proportional disaggregation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from gridtwin.errors import DimensionMismatch, InfeasibleSpatial, LengthError, ValidationError
from gridtwin.scenario_engine.data import HistoryTable, ScenarioSet


def intermittency_index(series) -> float:
    """Population variance of the first difference of the summed series.

    ``series`` is one trajectory or a (time x assets) array whose columns are
    added up before differencing.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim == 2:
        x = x.sum(axis=1)
    if x.ndim != 1 or len(x) < 2:
        raise LengthError("intermittency index needs a series of length >= 2")
    return float(np.var(np.diff(x)))


@dataclass(frozen=True)
class Bundling:
    bundles: tuple                 # tuple of tuples of asset ids
    weights: dict                  # asset id -> share of its bundle
    coords: dict                   # asset id -> (x, y) km
    objective: float = 0.0
    trace: tuple = field(default=())  # objective after each merge

    @property
    def names(self) -> tuple:
        return tuple("+".join(b) for b in self.bundles)

    def bundle_of(self, asset) -> int:
        for i, b in enumerate(self.bundles):
            if asset in b:
                return i
        raise KeyError(asset)


def partition_objective(cov: np.ndarray, groups) -> float:
    """Sum of bundle indices from the covariance of first differences."""
    return float(sum(cov[np.ix_(g, g)].sum() for g in groups))


def diff_covariance(history: HistoryTable) -> np.ndarray:
    d = history.differences()
    if d.shape[0] < 1:
        raise LengthError("history too short to difference")
    c = d - d.mean(axis=0)
    return c.T @ c / d.shape[0]


def _diameter(dist, a, b):
    return max(dist[i, j] for i in a for j in b)


def _weights(history: HistoryTable, groups):
    means = history.series().mean(axis=0)
    w = {}
    for g in groups:
        tot = means[list(g)].sum()
        for i in g:
            w[history.assets[i]] = float(means[i] / tot) if tot > 0 else 1.0 / len(g)
    return w


def _improve(cov, dist, radius, groups):
    """Move single assets between bundles while the objective drops."""
    groups = [list(g) for g in groups]
    improved = True
    while improved:
        improved = False
        for a in range(len(groups)):
            for i in list(groups[a]):
                if len(groups[a]) == 1:
                    continue
                rest = [j for j in groups[a] if j != i]
                loss = 2 * cov[i, rest].sum()
                best, target = -1e-12, None
                for b in range(len(groups)):
                    if b == a or _diameter(dist, [i], groups[b]) > radius:
                        continue
                    gain = loss - 2 * cov[i, groups[b]].sum()
                    if gain > best:
                        best, target = gain, b
                if target is not None:
                    groups[a].remove(i)
                    groups[target].append(i)
                    improved = True
    return [sorted(g) for g in groups]


def set_partitions(n: int, k: int):
    """All partitions of range(n) into exactly k blocks (restricted growth strings)."""
    def rec(i, labels, used):
        if i == n:
            if used == k:
                groups = [[] for _ in range(k)]
                for j, g in enumerate(labels):
                    groups[g].append(j)
                yield groups
            return
        if k - used > n - i:
            return
        for g in range(min(used + 1, k)):
            labels.append(g)
            yield from rec(i + 1, labels, max(used, g + 1))
            labels.pop()
    yield from rec(0, [], 0)


def _exhaustive(cov, dist, radius, k):
    best, arg = np.inf, None
    for groups in set_partitions(len(cov), k):
        if any(len(g) > 1 and dist[np.ix_(g, g)].max() > radius for g in groups):
            continue
        f = partition_objective(cov, groups)
        if f < best - 1e-12:
            best, arg = f, groups
    return arg


def greedy_bundle(history: HistoryTable, coords, n_bundles: int, max_radius: float,
                  refine: bool = True, exact_upto: int = 6) -> Bundling:
    """Group assets into ``n_bundles`` bundles with a low total intermittency index.

    Starting from singletons, the pair of bundles whose union keeps every
    pairwise distance within ``max_radius`` km and adds the least to the
    objective is merged until ``n_bundles`` remain; single-asset moves then
    polish the result. With at most ``exact_upto`` assets every partition is
    checked instead. ``coords`` maps asset id to planar (x, y) km.
    """
    n = len(history.assets)
    if not 1 <= n_bundles <= n:
        raise ValidationError(f"need 1 <= n_bundles <= {n}")
    if max_radius <= 0:
        raise ValidationError("max_radius must be positive")
    xy = np.array([coords[a] for a in history.assets], dtype=float).reshape(n, -1)
    dist = squareform(pdist(xy)) if n > 1 else np.zeros((1, 1))
    cov = diff_covariance(history)
    groups = [[i] for i in range(n)]
    trace = [partition_objective(cov, groups)]
    if n <= exact_upto:
        groups = _exhaustive(cov, dist, max_radius, n_bundles)
        if groups is None:
            raise InfeasibleSpatial(f"no partition into {n_bundles} bundles fits within "
                                    f"{max_radius} km")
        refine = False
    while len(groups) > n_bundles:
        best = None
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                if _diameter(dist, groups[a], groups[b]) > max_radius:
                    continue
                delta = 2 * cov[np.ix_(groups[a], groups[b])].sum()
                if best is None or delta < best[0] - 1e-15:
                    best = (delta, a, b)
        if best is None:
            raise InfeasibleSpatial(f"cannot form {n_bundles} bundles within {max_radius} km; "
                                    f"stuck at {len(groups)}")
        _, a, b = best
        groups[a] = sorted(groups[a] + groups[b])
        del groups[b]
        trace.append(partition_objective(cov, groups))
    if refine:
        groups = _improve(cov, dist, max_radius, groups)
    groups.sort()
    names = history.assets
    return Bundling(
        tuple(tuple(names[i] for i in g) for g in groups),
        _weights(history, groups),
        {a: tuple(float(c) for c in xy[i]) for i, a in enumerate(names)},
        partition_objective(cov, groups),
        tuple(trace),
    )


def bundle_history(history: HistoryTable, bundling: Bundling) -> HistoryTable:
    """Aggregate history columns into bundle columns."""
    s = history.series()
    idx = {a: i for i, a in enumerate(history.assets)}
    cols = [s[:, [idx[a] for a in b]].sum(axis=1) for b in bundling.bundles]
    out = HistoryTable(np.column_stack(cols), bundling.names)
    return out.by_day(history.steps) if history.steps > 1 else out


def disaggregate(bundled: ScenarioSet, bundling: Bundling) -> ScenarioSet:
    """Split bundle trajectories over their assets in proportion to the weights."""
    if bundled.values.shape[2] != len(bundling.bundles):
        raise DimensionMismatch(f"{bundled.values.shape[2]} bundle columns for "
                                f"{len(bundling.bundles)} bundles")
    assets = [a for b in bundling.bundles for a in b]
    out = np.empty(bundled.values.shape[:2] + (len(assets),))
    k = 0
    for j, b in enumerate(bundling.bundles):
        for a in b:
            out[:, :, k] = bundling.weights[a] * bundled.values[:, :, j]
            k += 1
    return ScenarioSet(out, tuple(assets), bundled.step_minutes)
