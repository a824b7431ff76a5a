"""Best-bound branch-and-bound over the native simplex."""
from __future__ import annotations

import heapq
import itertools
import math
import time

import numpy as np

from gridtwin.errors import NoIncumbentWithinLimit
from gridtwin.opt_core.model import MixedIntegerProgram, Solution, Status
from gridtwin.opt_core.simplex import SimplexEngine, _Timeout

INT_TOL = 1e-6


def _prune_threshold(incumbent: float, gap: float) -> float:
    return incumbent - max(gap * abs(incumbent), 1e-9 * max(1.0, abs(incumbent)))


def solve_milp_native(
    mip: MixedIntegerProgram,
    gap: float = 1e-6,
    time_limit: float | None = None,
    heuristic_every: int = 25,
) -> Solution:
    """Solve ``mip`` to relative ``gap``.

    Nodes are explored in order of their parent's LP bound (ties by creation
    order); the branching variable is the most fractional integer variable,
    lowest index first on ties. A rounding heuristic runs at the root and
    every ``heuristic_every`` nodes.
    """
    if gap < 0:
        raise ValueError("gap must be nonnegative")
    start = time.monotonic()
    deadline = start + time_limit if time_limit else None
    eng = SimplexEngine.from_lp(mip)
    ints = np.array(sorted(set(mip.integer)), dtype=np.int64)
    lb0, ub0 = mip.lb, mip.ub
    if len(ints):
        lb0[ints] = np.ceil(lb0[ints] - INT_TOL)
        ub0[ints] = np.floor(ub0[ints] + INT_TOL)
    if np.any(lb0 > ub0):
        return Solution(Status.INFEASIBLE, var_names=mip.var_names)

    inc_x: np.ndarray | None = None
    inc_obj = math.inf
    counter = itertools.count()
    heap: list = [(-math.inf, next(counter), lb0, ub0)]
    nodes = branches = lp_iters = 0
    timed_out = False

    def try_incumbent(x: np.ndarray, obj: float) -> None:
        nonlocal inc_x, inc_obj
        if obj < inc_obj - 1e-12 * max(1.0, abs(obj)):
            inc_x, inc_obj = x, obj

    def rounding(x, lb, ub) -> None:
        nonlocal lp_iters
        for mode in (np.round, np.ceil):
            vals = np.clip(mode(x[ints] - (INT_TOL if mode is np.ceil else 0.0)), lb[ints], ub[ints])
            hl, hu = lb.copy(), ub.copy()
            hl[ints] = vals
            hu[ints] = vals
            sol = eng.solve(hl, hu, deadline)
            lp_iters += sol.iterations
            if sol.status is Status.OPTIMAL:
                xs = sol.x.copy()
                xs[ints] = vals
                try_incumbent(xs, sol.objective)
                return

    while heap:
        bound, seq, lb, ub = heap[0]
        if inc_x is not None and bound >= _prune_threshold(inc_obj, gap):
            break
        if deadline is not None and time.monotonic() > deadline:
            timed_out = True
            break
        heapq.heappop(heap)
        try:
            sol = eng.solve(lb, ub, deadline)
        except _Timeout:
            heapq.heappush(heap, (bound, seq, lb, ub))
            timed_out = True
            break
        nodes += 1
        lp_iters += sol.iterations
        if sol.status is Status.INFEASIBLE:
            continue
        if sol.status is Status.UNBOUNDED:
            if nodes == 1:
                return Solution(Status.UNBOUNDED, nodes=nodes, var_names=mip.var_names)
            continue
        obj = sol.objective
        if inc_x is not None and obj >= _prune_threshold(inc_obj, gap):
            continue
        x = sol.x
        if len(ints):
            xi = x[ints]
            frac = np.abs(xi - np.round(xi))
        else:
            frac = np.zeros(0)
        if not len(frac) or frac.max() <= INT_TOL:
            xs = x.copy()
            if len(ints):
                xs[ints] = np.round(xs[ints])
            try_incumbent(xs, obj)
            continue
        if heuristic_every and (nodes == 1 or nodes % heuristic_every == 0):
            try:
                rounding(x, lb, ub)
            except _Timeout:
                heapq.heappush(heap, (obj, next(counter), lb, ub))
                timed_out = True
                break
        f = xi - np.floor(xi)
        score = np.minimum(f, 1.0 - f)
        score[frac <= INT_TOL] = -1.0
        k = int(np.argmax(score))
        j = ints[k]
        down_ub = ub.copy()
        down_ub[j] = math.floor(x[j])
        up_lb = lb.copy()
        up_lb[j] = math.ceil(x[j])
        branches += 1
        heapq.heappush(heap, (obj, next(counter), lb, down_ub))
        heapq.heappush(heap, (obj, next(counter), up_lb, ub))

    open_bound = min((h[0] for h in heap), default=math.inf)
    if inc_x is None:
        if timed_out:
            raise NoIncumbentWithinLimit(
                f"no integer solution within {time_limit}s ({nodes} nodes)"
            )
        return Solution(Status.INFEASIBLE, nodes=nodes, branches=branches,
                        iterations=lp_iters, var_names=mip.var_names)
    bound = min(open_bound, inc_obj)
    rel_gap = (inc_obj - bound) / max(abs(inc_obj), 1e-9) if math.isfinite(bound) else math.inf
    status = Status.TIME_LIMIT if timed_out and rel_gap > gap else Status.OPTIMAL
    return Solution(
        status,
        x=inc_x,
        objective=inc_obj + mip.objective_constant,
        bound=bound + mip.objective_constant,
        nodes=nodes,
        branches=branches,
        gap=max(rel_gap, 0.0),
        iterations=lp_iters,
        var_names=mip.var_names,
    )
