"""Two-stage stochastic recommitment and CVaR tools."""
from gridtwin.stochastic.risk import (
    CvarEpigraph,
    RiskConfig,
    cvar,
    cvar_epigraph_terms,
    cvar_lp,
    vpi,
)
from gridtwin.stochastic.tssp import (
    Recourse,
    StochasticSolution,
    TsspInstance,
    build_extensive_form,
    evaluate_schedule,
    log_to_csv,
    solve_benders,
    solve_deterministic,
    solve_extensive_form,
    solve_perfect_information,
)

__all__ = [
    "CvarEpigraph", "Recourse", "RiskConfig", "StochasticSolution", "TsspInstance",
    "build_extensive_form", "cvar", "cvar_epigraph_terms", "cvar_lp", "evaluate_schedule",
    "log_to_csv", "solve_benders", "solve_deterministic", "solve_extensive_form",
    "solve_perfect_information", "vpi",
]
