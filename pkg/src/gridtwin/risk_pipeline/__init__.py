"""Day-long rolling-horizon simulation, ensemble evaluation and risk reports."""
from gridtwin.risk_pipeline.config import DAY_MINUTES, PipelineConfig
from gridtwin.risk_pipeline.report import (
    METRICS,
    RESULT_COLUMNS,
    MetricSummary,
    RiskReport,
    build_risk_report,
    results_csv,
)
from gridtwin.risk_pipeline.simulate import (
    DAY_COLUMNS,
    DayResult,
    PipelineRun,
    evaluate_ensemble,
    run_pipeline,
    scenario_actuals,
    scenario_forecast,
    simulate_day,
)

__all__ = [
    "DAY_COLUMNS", "DAY_MINUTES", "METRICS", "RESULT_COLUMNS", "DayResult", "MetricSummary",
    "PipelineConfig", "PipelineRun", "RiskReport", "build_risk_report", "evaluate_ensemble",
    "results_csv", "run_pipeline", "scenario_actuals", "scenario_forecast", "simulate_day",
]
