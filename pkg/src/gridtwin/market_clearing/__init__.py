"""Market-clearing formulations: RT-SCED, look-ahead dispatch, SCUC, FRAC and LAC."""
from gridtwin.market_clearing.commitment import (
    LAC_STEP_MINUTES,
    LAC_WINDOW_STEPS,
    CommitmentResult,
    CommitmentSchedule,
    build_scuc,
    pricing_run,
    run_lac,
    solve_frac,
    solve_scuc,
    status_before,
)
from gridtwin.market_clearing.dispatch import (
    LAD_INTERVALS,
    SCED_MINUTES,
    DispatchSolution,
    Forecast,
    LadSolution,
    SystemState,
    advance_state,
    build_lad,
    build_sced,
    check_dispatch,
    energy_rate,
    run_myopic,
    solve_lad,
    solve_sced,
)
from gridtwin.market_clearing.formulation import Penalties, commitment_feasible

__all__ = [
    "LAC_STEP_MINUTES", "LAC_WINDOW_STEPS", "LAD_INTERVALS", "SCED_MINUTES",
    "CommitmentResult", "CommitmentSchedule", "DispatchSolution", "Forecast", "LadSolution",
    "Penalties", "SystemState", "advance_state", "build_lad", "build_scuc", "build_sced",
    "check_dispatch", "commitment_feasible", "energy_rate", "pricing_run", "run_lac",
    "run_myopic", "solve_frac", "solve_lad", "solve_scuc", "solve_sced", "status_before",
]
