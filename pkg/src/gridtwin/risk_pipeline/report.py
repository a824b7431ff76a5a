"""Aggregation of simulated days into risk metrics."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from gridtwin.errors import EmptyEnsemble
from gridtwin.market_clearing.export import dumps, fmt
from gridtwin.stochastic import RiskConfig, cvar

RESULT_COLUMNS = ("scenario_id", "total_cost", "peak_violation_mw", "violation_cost")
METRICS = ("total_cost", "violation_cost", "peak_violation_mw", "unserved_mwh",
           "reserve_shortfall_mwh")
ADVERSE_TOL = 1e-6  # MW; slacks below this are solver noise


@dataclass(frozen=True)
class MetricSummary:
    expectation: float
    cvar: float
    worst: float


@dataclass(frozen=True)
class RiskReport:
    alpha: float
    n_scenarios: int
    failed: tuple                   # scenario ids that did not simulate
    metrics: dict                   # name -> MetricSummary
    p_adverse: float                # P(peak line overload > threshold)
    p_cost_exceed: float | None     # P(total cost > cost threshold), when one is set
    expected_violation_cost: float
    violation_threshold_mw: float

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n_scenarios": self.n_scenarios,
            "failed": list(self.failed),
            "metrics": {k: {"expectation": m.expectation, "cvar": m.cvar, "worst": m.worst}
                        for k, m in self.metrics.items()},
            "p_adverse": self.p_adverse,
            "p_cost_exceed": self.p_cost_exceed,
            "expected_violation_cost": self.expected_violation_cost,
            "violation_threshold_mw": self.violation_threshold_mw,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def to_text(self) -> str:
        head = f"{'metric':<24}{'mean':>16}{'CVaR ' + fmt(self.alpha):>16}{'worst':>16}"
        lines = [head, "-" * len(head)]
        for k, m in self.metrics.items():
            lines.append(f"{k:<24}{m.expectation:>16.4f}{m.cvar:>16.4f}{m.worst:>16.4f}")
        lines.append("")
        lines.append(f"scenarios               {self.n_scenarios}")
        if self.failed:
            lines.append(f"failed                  {','.join(map(str, self.failed))}")
        lines.append(f"P(line overload > {fmt(self.violation_threshold_mw)} MW)"
                     f"  {self.p_adverse:.4f}")
        if self.p_cost_exceed is not None:
            lines.append(f"P(cost > threshold)     {self.p_cost_exceed:.4f}")
        lines.append(f"expected violation $    {self.expected_violation_cost:.4f}")
        return "\n".join(lines) + "\n"


def _metric(result, name) -> float:
    return float(getattr(result, name))


def build_risk_report(results, risk: RiskConfig | None = None) -> RiskReport:
    """Expectation, CVaR and adverse-event probabilities over simulated days.

    Failed days are listed but left out of every statistic. Sums use exact
    rounding so the report does not depend on the order of ``results``.
    """
    risk = risk or RiskConfig()
    results = list(results)
    good = [r for r in results if r.ok]
    if not good:
        raise EmptyEnsemble("no successfully simulated days to report on")
    n = len(good)
    metrics = {}
    for name in METRICS:
        v = np.array([_metric(r, name) for r in good])
        metrics[name] = MetricSummary(math.fsum(v) / n, cvar(v, risk.alpha), float(v.max()))
    limit = risk.violation_mw + ADVERSE_TOL
    p_adverse = sum(r.peak_violation_mw > limit for r in good) / n
    p_cost = None
    if math.isfinite(risk.cost_threshold):
        p_cost = sum(r.total_cost > risk.cost_threshold for r in good) / n
    return RiskReport(
        alpha=risk.alpha,
        n_scenarios=n,
        failed=tuple(sorted(r.scenario_id for r in results if not r.ok)),
        metrics=metrics,
        p_adverse=p_adverse,
        p_cost_exceed=p_cost,
        expected_violation_cost=metrics["violation_cost"].expectation,
        violation_threshold_mw=risk.violation_mw,
    )


def results_csv(results) -> str:
    """Ensemble summary, one row per scenario; failed scenarios have empty fields."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        if r.ok:
            w.writerow([r.scenario_id, repr(r.total_cost), repr(r.peak_violation_mw),
                        repr(r.violation_cost)])
        else:
            w.writerow([r.scenario_id, "", "", ""])
    return buf.getvalue()
