"""CSV/JSON export of dispatch and commitment results (one row per generator-interval)."""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from gridtwin.grid_model import Case

COLUMNS = ("gen_id", "t", "u", "p_mw", "lmp_node", "slack_mw")


def fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return f"{v:.6f}".rstrip("0").rstrip(".") if v != 0 else "0"


def dispatch_rows(case: Case, solutions, t0: int = 0) -> list[dict]:
    """Rows for a sequence of :class:`DispatchSolution` (t counts intervals from ``t0``).

    ``slack_mw`` is the interval's total violation: energy imbalance plus
    line overloads.
    """
    rows = []
    for k, sol in enumerate(solutions):
        slack = sol.balance_shortfall + sol.balance_surplus + float(np.sum(sol.line_slack))
        for g, gen in enumerate(case.generators):
            u = int(sol.commitment[g]) if sol.commitment is not None else int(sol.p[g] > 0)
            rows.append({"gen_id": gen.id, "t": t0 + k, "u": u, "p_mw": sol.p[g],
                         "lmp_node": sol.lmp[case.gen_bus[g]], "slack_mw": slack})
    return rows


def commitment_rows(case: Case, result) -> list[dict]:
    """Rows for a :class:`CommitmentResult`; LMPs present only after a pricing run."""
    rows = []
    u = result.schedule.u
    steps = result.dispatch.shape[1]
    slack = np.abs(result.balance_slack) + result.line_slack.sum(axis=0) \
        if result.line_slack.size else np.abs(result.balance_slack)
    for g, gen in enumerate(case.generators):
        for t in range(steps):
            lmp = result.lmp[case.gen_bus[g], t] if result.lmp is not None else None
            rows.append({"gen_id": gen.id, "t": t, "u": int(u[g, min(t, u.shape[1] - 1)]),
                         "p_mw": result.dispatch[g, t], "lmp_node": lmp, "slack_mw": slack[t]})
    return rows


def rows_to_csv(rows, columns=COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) if not isinstance(r[c], str) else r[c] for c in columns])
    return buf.getvalue()


def write_csv(rows, path, columns=COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows, columns))


def commitment_summary(case: Case, result) -> dict:
    return {
        "status": result.status.value,
        "objective": result.objective,
        "startup_cost": result.startup_cost,
        "no_load_cost": result.no_load_cost,
        "energy_cost": result.energy_cost,
        "penalty_cost": result.penalty_cost,
        "bound": None if math.isnan(result.bound) else result.bound,
        "newly_committed": [list(x) for x in result.newly_committed],
        "schedule": result.schedule.to_dict(),
    }


def dispatch_summary(solutions) -> dict:
    return {
        "intervals": len(solutions),
        "total_cost": float(sum(s.interval_cost for s in solutions)),
        "penalty_cost": float(sum(s.penalty_cost for s in solutions)),
        "peak_transmission_violation_mw": float(max((s.transmission_violation for s in solutions),
                                                    default=0.0)),
        "status": [s.status.value for s in solutions],
    }


def dumps(obj) -> str:
    """Deterministic JSON text."""
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not serializable: {type(o).__name__}")
