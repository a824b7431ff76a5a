"""HiGHS backend through scipy, used for pipeline-scale problems."""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from gridtwin.errors import NoIncumbentWithinLimit, NumericalFailure
from gridtwin.opt_core.model import LinearProgram, MixedIntegerProgram, Relation, Solution, Status


def _row_split(lp: LinearProgram):
    A = lp.matrix().tocsr()
    b = lp.rhs
    rel = np.array([r.value for r in lp.relations])
    le = np.flatnonzero(rel == "<=")
    ge = np.flatnonzero(rel == ">=")
    eq = np.flatnonzero(rel == "=")
    ineq = np.concatenate([le, ge])
    sign = np.concatenate([np.ones(len(le)), -np.ones(len(ge))])
    A_ub = sp.diags(sign) @ A[ineq] if len(ineq) else None
    b_ub = sign * b[ineq] if len(ineq) else None
    A_eq = A[eq] if len(eq) else None
    b_eq = b[eq] if len(eq) else None
    return ineq, sign, eq, A_ub, b_ub, A_eq, b_eq


def solve_lp_highs(lp: LinearProgram, time_limit: float | None = None) -> Solution:
    ineq, sign, eq, A_ub, b_ub, A_eq, b_eq = _row_split(lp)
    options = {"presolve": True}
    if time_limit:
        options["time_limit"] = float(time_limit)
    res = linprog(
        lp.cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=np.column_stack([lp.lb, lp.ub]) if lp.n_vars else None,
        method="highs", options=options,
    )
    if res.status == 2:
        return Solution(Status.INFEASIBLE, var_names=lp.var_names)
    if res.status == 3:
        return Solution(Status.UNBOUNDED, var_names=lp.var_names)
    if res.status != 0:
        raise NumericalFailure(f"HiGHS LP failed: {res.message}")
    duals = np.zeros(lp.n_cons)
    if len(ineq):
        duals[ineq] = sign * res.ineqlin.marginals
    if len(eq):
        duals[eq] = res.eqlin.marginals
    rc = res.lower.marginals + res.upper.marginals
    return Solution(
        Status.OPTIMAL,
        x=np.asarray(res.x, dtype=float),
        objective=float(res.fun) + lp.objective_constant,
        duals=duals,
        reduced_costs=np.asarray(rc, dtype=float),
        iterations=int(getattr(res, "nit", 0)),
        var_names=lp.var_names,
    )


def solve_milp_highs(mip: MixedIntegerProgram, gap: float = 1e-6,
                     time_limit: float | None = None) -> Solution:
    A = mip.matrix()
    b = mip.rhs
    lo = np.full(mip.n_cons, -math.inf)
    hi = np.full(mip.n_cons, math.inf)
    for i, r in enumerate(mip.relations):
        if r is not Relation.GE:
            hi[i] = b[i]
        if r is not Relation.LE:
            lo[i] = b[i]
    integrality = np.zeros(mip.n_vars)
    integrality[list(mip.integer)] = 1
    options = {"mip_rel_gap": float(gap), "disp": False, "presolve": True}
    if time_limit:
        options["time_limit"] = float(time_limit)
    constraints = [LinearConstraint(A, lo, hi)] if mip.n_cons else []
    res = milp(mip.cost, constraints=constraints, integrality=integrality,
               bounds=Bounds(mip.lb, mip.ub), options=options)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.x is None:
        if res.status == 2:
            return Solution(Status.INFEASIBLE, nodes=nodes, var_names=mip.var_names)
        if res.status == 3:
            return Solution(Status.UNBOUNDED, nodes=nodes, var_names=mip.var_names)
        if res.status == 1:
            raise NoIncumbentWithinLimit(f"HiGHS found no incumbent: {res.message}")
        raise NumericalFailure(f"HiGHS MILP failed: {res.message}")
    x = np.asarray(res.x, dtype=float)
    ints = list(mip.integer)
    x[ints] = np.round(x[ints])
    bound = float(getattr(res, "mip_dual_bound", res.fun))
    obj = float(res.fun)
    rel_gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
    status = Status.OPTIMAL if res.status == 0 else Status.TIME_LIMIT
    return Solution(
        status,
        x=x,
        objective=obj + mip.objective_constant,
        bound=bound + mip.objective_constant,
        nodes=nodes,
        gap=rel_gap,
        var_names=mip.var_names,
    )
