"""Gaussian copula over empirical marginals."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from gridtwin.errors import DegenerateColumn, ValidationError
from gridtwin.scenario_engine.data import HistoryTable, ScenarioSet

EIG_FLOOR = 1e-8
MIN_ROWS = 30


@dataclass(frozen=True)
class CopulaModel:
    """Sorted marginals per column plus the score correlation and its factor.

    ``correlation`` is the Gaussian correlation matching the history's rank
    correlations, 2 sin(pi rho_s / 6), projected back to the semidefinite
    cone when the transform leaves it. ``factor`` is the Cholesky factor of
    the same matrix after flooring its eigenvalues at 1e-8 and restoring the
    unit diagonal, so that it exists even for rank-deficient histories.
    """

    marginals: np.ndarray       # rows x columns, each column sorted ascending
    correlation: np.ndarray
    factor: np.ndarray
    assets: tuple
    steps: int = 1

    @property
    def dim(self) -> int:
        return self.marginals.shape[1]


def normal_scores(values: np.ndarray) -> np.ndarray:
    """Inverse-normal of rank/(m+1), ties averaged."""
    m = values.shape[0]
    ranks = rankdata(values, axis=0)
    return norm.ppf(ranks / (m + 1.0))


def regularize(corr: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    w, v = np.linalg.eigh((corr + corr.T) / 2)
    c = (v * np.maximum(w, floor)) @ v.T
    d = np.sqrt(np.diag(c))
    c = c / np.outer(d, d)
    return (c + c.T) / 2


def fit_copula(history: HistoryTable) -> CopulaModel:
    x = history.values
    m = x.shape[0]
    if m < MIN_ROWS:
        warnings.warn(f"fitting a copula on only {m} rows", stacklevel=2)
    flat = np.ptp(x, axis=0) == 0
    if np.any(flat):
        name = history.columns[int(np.argmax(flat))]
        raise DegenerateColumn(f"column {name!r} is constant; ranks are undefined")
    rank_corr = np.atleast_2d(np.corrcoef(rankdata(x, axis=0), rowvar=False))
    # the Gaussian correlation whose copula has these rank correlations
    corr = 2.0 * np.sin(np.pi * np.clip(rank_corr, -1.0, 1.0) / 6.0)
    np.fill_diagonal(corr, 1.0)
    if np.linalg.eigvalsh(corr)[0] < 0:  # the transform can leave the PSD cone
        corr = regularize(corr, 0.0)
    factor = np.linalg.cholesky(regularize(corr))
    return CopulaModel(np.sort(x, axis=0), corr, factor, history.assets, history.steps)


def empirical_quantile(sorted_values: np.ndarray, u) -> np.ndarray:
    """Inverse of the rank/(m+1) transform, linear between order statistics.

    Level ``u`` sits at 1-based position ``u (m + 1)``; levels outside
    [1/(m+1), m/(m+1)] are clamped to the extreme observations.
    """
    m = len(sorted_values)
    pos = np.clip(np.asarray(u, dtype=float) * (m + 1) - 1.0, 0.0, m - 1.0)
    return np.interp(pos, np.arange(m), sorted_values)


def sample_gaussian(model: CopulaModel, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, model.dim))
    return z @ model.factor.T


def sample_scenarios(model: CopulaModel, n: int, t_steps: int, seed: int,
                     step_minutes: int = 60) -> ScenarioSet:
    """Draw ``n`` trajectories of ``t_steps`` steps.

    A model fitted on day-folded history (``steps == t_steps``) samples whole
    trajectories jointly. A per-timestamp model draws each step afresh from the
    cross-asset copula, so steps are independent.
    """
    if n < 1 or t_steps < 1:
        raise ValidationError("need n >= 1 scenarios and t_steps >= 1")
    rng = np.random.default_rng(seed)
    d = len(model.assets)
    if model.steps == t_steps:
        g = sample_gaussian(model, n, rng)
    elif model.steps == 1:
        g = sample_gaussian(model, n * t_steps, rng).reshape(n, t_steps * d)
    else:
        raise ValidationError(f"model was fitted on {model.steps}-step days, "
                              f"cannot sample {t_steps} steps")
    u = norm.cdf(g)
    cols = model.marginals.shape[1]
    out = np.empty_like(u)
    for j in range(t_steps * d):
        c = j if model.steps == t_steps else j % cols
        out[:, j] = empirical_quantile(model.marginals[:, c], u[:, j])
    return ScenarioSet(np.maximum(out, 0.0).reshape(n, t_steps, d), model.assets, step_minutes)


def fit_scenario_model(history: HistoryTable, steps: int) -> CopulaModel:
    """Joint model over whole days when there are more days than dimensions."""
    if history.steps == 1 and history.n_rows // steps > steps * len(history.assets):
        return fit_copula(history.by_day(steps))
    return fit_copula(history)
