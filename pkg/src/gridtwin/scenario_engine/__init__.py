"""Scenario generation, bundling, reduction and scoring."""
from gridtwin.scenario_engine.bundling import (
    Bundling,
    bundle_history,
    diff_covariance,
    disaggregate,
    greedy_bundle,
    intermittency_index,
    partition_objective,
)
from gridtwin.scenario_engine.copula import (
    CopulaModel,
    empirical_quantile,
    fit_copula,
    fit_scenario_model,
    sample_scenarios,
)
from gridtwin.scenario_engine.data import (
    HistoryTable,
    ScenarioSet,
    history_from_csv,
    history_to_csv,
    scenarios_from_csv,
    scenarios_to_csv,
)
from gridtwin.scenario_engine.reduction import (
    SupportResult,
    energy_distance,
    support_points,
    support_points_mm,
    variogram_score,
)

__all__ = [
    "Bundling", "CopulaModel", "HistoryTable", "ScenarioSet", "SupportResult",
    "bundle_history", "diff_covariance", "disaggregate", "empirical_quantile", "energy_distance",
    "fit_copula", "fit_scenario_model", "greedy_bundle", "history_from_csv", "history_to_csv",
    "intermittency_index", "partition_objective", "sample_scenarios", "scenarios_from_csv",
    "scenarios_to_csv", "support_points", "support_points_mm", "variogram_score",
]
