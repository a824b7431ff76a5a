"""LP/MILP solving for the clearing formulations.

``backend`` selects the engine: ``"native"`` is the in-house bounded simplex
with branch-and-bound, ``"highs"`` goes through scipy's HiGHS bindings, and
``"auto"`` picks native for small problems and HiGHS above
:data:`AUTO_NATIVE_LIMIT` tableau entries.
"""
from __future__ import annotations

from gridtwin.opt_core.branch_and_bound import solve_milp_native
from gridtwin.opt_core.highs import solve_lp_highs, solve_milp_highs
from gridtwin.opt_core.lpfile import write_lp_text
from gridtwin.opt_core.model import (
    INF,
    LinearProgram,
    MixedIntegerProgram,
    Relation,
    Solution,
    Status,
)
from gridtwin.opt_core.simplex import SimplexEngine, solve_lp_native

AUTO_NATIVE_LIMIT = 40_000

BACKENDS = ("native", "highs", "auto")


def _pick(problem: LinearProgram, backend: str) -> str:
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend != "auto":
        return backend
    size = problem.n_cons * (problem.n_vars + problem.n_cons)
    return "native" if size <= AUTO_NATIVE_LIMIT else "highs"


def solve_lp(lp: LinearProgram, backend: str = "native", time_limit: float | None = None) -> Solution:
    if _pick(lp, backend) == "native":
        return solve_lp_native(lp, time_limit)
    return solve_lp_highs(lp, time_limit)


def solve_milp(mip: MixedIntegerProgram, gap: float = 1e-6, time_limit: float | None = None,
               backend: str = "native") -> Solution:
    if gap < 0:
        raise ValueError("gap must be nonnegative")
    if not getattr(mip, "integer", None):
        sol = solve_lp(mip, backend, time_limit)
        sol.bound = sol.objective
        sol.gap = 0.0
        return sol
    if _pick(mip, backend) == "native":
        return solve_milp_native(mip, gap, time_limit)
    return solve_milp_highs(mip, gap, time_limit)


__all__ = [
    "AUTO_NATIVE_LIMIT", "BACKENDS", "INF", "LinearProgram", "MixedIntegerProgram", "Relation",
    "Solution", "Status", "SimplexEngine", "solve_lp", "solve_milp", "write_lp_text",
]
