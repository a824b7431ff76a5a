"""CVaR by sorting and as LP epigraph terms, VPI, and risk settings."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gridtwin.errors import EmptyInput, OrderingViolation, ValidationError
from gridtwin.opt_core import INF, LinearProgram, solve_lp

ORDER_TOL = 1e-6


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValidationError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha


def cvar(values, alpha: float) -> float:
    """Mean of the worst ``alpha`` fraction of equally likely outcomes.

    Equals min over eta of eta + mean(max(0, v - eta)) / alpha; the boundary
    outcome enters with the fractional weight needed to fill the tail.
    """
    alpha = _check_alpha(alpha)
    v = np.sort(np.asarray(values, dtype=float).ravel())[::-1]
    n = v.size
    if n == 0:
        raise EmptyInput("cvar of an empty sample")
    k = alpha * n
    if abs(k - round(k)) < 1e-9:
        k = float(round(k))
    whole = int(math.floor(k))
    total = v[:whole].sum()
    if whole < n and k > whole:
        total += (k - whole) * v[whole]
    return float(total / k)


@dataclass(frozen=True)
class CvarEpigraph:
    """Epigraph form of weight * CVaR_alpha over ``n`` equiprobable costs.

    Variables: eta (free) and excess_s >= 0. Rows: excess_s - cost_s + eta >= 0.
    Objective: weight * (eta + sum(excess_s) / (alpha n)).
    """

    alpha: float
    n: int
    weight: float = 1.0

    def attach(self, prog: LinearProgram, costs, tag: str = "") -> tuple[int, list]:
        """Splice the terms into ``prog``.

        ``costs`` holds one (coefficients dict, constant) pair per scenario
        describing cost_s as a linear expression in existing variables.
        """
        if len(costs) != self.n:
            raise ValidationError(f"expected {self.n} scenario costs, got {len(costs)}")
        eta = prog.add_var(f"cvar_eta{tag}", -INF, INF, self.weight)
        excess = []
        for s, (coeffs, const) in enumerate(costs):
            e = prog.add_var(f"cvar_excess[{s}]{tag}", 0.0, INF, self.weight / (self.alpha * self.n))
            row = {e: 1.0, eta: 1.0}
            for j, a in coeffs.items():
                row[j] = row.get(j, 0.0) - a
            prog.add_constraint(row, ">=", float(const), name=f"cvar_tail[{s}]{tag}")
            excess.append(e)
        return eta, excess


def cvar_epigraph_terms(alpha: float, n_scenarios: int, weight: float = 1.0) -> CvarEpigraph:
    if n_scenarios < 1:
        raise EmptyInput("need at least one scenario")
    return CvarEpigraph(_check_alpha(alpha), int(n_scenarios), float(weight))


def cvar_lp(values, alpha: float, backend: str = "native") -> float:
    """CVaR of fixed outcomes by optimizing the epigraph terms alone."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInput("cvar of an empty sample")
    lp = LinearProgram("cvar")
    cvar_epigraph_terms(alpha, v.size).attach(lp, [({}, float(c)) for c in v])
    sol = solve_lp(lp, backend)
    if not sol.optimal:
        raise ValidationError(f"cvar LP ended {sol.status.value}")
    return float(sol.objective)


def vpi(det_expected_cost: float, stoch_expected_cost: float, pi_expected_cost: float,
        tol: float = ORDER_TOL) -> tuple[float, float]:
    """Relative premium of the deterministic and stochastic plans over perfect information."""
    d, s, p = float(det_expected_cost), float(stoch_expected_cost), float(pi_expected_cost)
    if p <= 0:
        raise ValidationError("perfect-information cost must be positive")
    scale = max(abs(d), abs(s), abs(p), 1.0)
    if s > d + tol * scale:
        raise OrderingViolation(f"stochastic cost {s} exceeds deterministic cost {d}")
    if p > s + tol * scale:
        raise OrderingViolation(f"perfect-information cost {p} exceeds stochastic cost {s}")
    return (d - p) / p, (s - p) / p


@dataclass(frozen=True)
class RiskConfig:
    """Tail fraction, adverse-event thresholds and CVaR weight in risk-averse objectives."""

    alpha: float = 0.05
    violation_mw: float = 0.0
    cost_threshold: float = math.inf
    cvar_weight: float = 0.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.violation_mw < 0 or self.cvar_weight < 0:
            raise ValidationError("thresholds and weights must be nonnegative")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "violation_mw": self.violation_mw,
                "cost_threshold": None if math.isinf(self.cost_threshold) else self.cost_threshold,
                "cvar_weight": self.cvar_weight}
