"""Rolling-horizon day simulation and parallel ensemble evaluation."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from gridtwin.errors import DimensionMismatch, GridTwinError, ParseError, SimulationError, ValidationError
from gridtwin.grid_model import Case
from gridtwin.market_clearing import (
    LAC_STEP_MINUTES,
    CommitmentResult,
    CommitmentSchedule,
    Forecast,
    SystemState,
    advance_state,
    run_lac,
    solve_frac,
    solve_lad,
    solve_scuc,
    solve_sced,
)
from gridtwin.risk_pipeline.config import DAY_MINUTES, PipelineConfig
from gridtwin.scenario_engine import ScenarioSet

DAY_COLUMNS = ("scenario", "interval", "minute", "cost", "penalty_cost",
               "transmission_violation_mw", "balance_violation_mw", "reserve_shortfall_mw",
               "commitment_cost")


@dataclass
class DayResult:
    """Per-interval costs ($, penalties included) and violations of one simulated day."""

    scenario_id: int
    cost: np.ndarray
    penalty_cost: np.ndarray
    transmission_mw: np.ndarray
    balance_mw: np.ndarray
    reserve_mw: np.ndarray
    commitment_cost: float
    minutes: int = 5
    commitment: np.ndarray | None = field(default=None, repr=False)  # generators x hours
    added: tuple = ()        # (generator id, hour) commitments added by look-ahead runs
    error: str | None = None

    @classmethod
    def failed(cls, scenario_id: int, message: str, minutes: int = 5) -> "DayResult":
        e = np.zeros(0)
        return cls(scenario_id, e, e, e, e, e, math.nan, minutes, error=message)

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def n_intervals(self) -> int:
        return len(self.cost)

    @property
    def total_cost(self) -> float:
        return math.fsum(self.cost) + self.commitment_cost

    @property
    def violation_cost(self) -> float:
        return math.fsum(self.penalty_cost)

    @property
    def peak_violation_mw(self) -> float:
        """Largest total line overload over the day."""
        return float(self.transmission_mw.max()) if len(self.transmission_mw) else 0.0

    @property
    def unserved_mwh(self) -> float:
        return math.fsum(self.balance_mw) * self.minutes / 60.0

    @property
    def reserve_shortfall_mwh(self) -> float:
        return math.fsum(self.reserve_mw) * self.minutes / 60.0

    def summary(self) -> dict:
        return {"scenario_id": self.scenario_id, "total_cost": self.total_cost,
                "commitment_cost": self.commitment_cost, "violation_cost": self.violation_cost,
                "peak_violation_mw": self.peak_violation_mw, "unserved_mwh": self.unserved_mwh,
                "reserve_shortfall_mwh": self.reserve_shortfall_mwh,
                "intervals": self.n_intervals, "error": self.error}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(DAY_COLUMNS)
        for i in range(self.n_intervals):
            w.writerow([self.scenario_id, i, i * self.minutes, repr(float(self.cost[i])),
                        repr(float(self.penalty_cost[i])), repr(float(self.transmission_mw[i])),
                        repr(float(self.balance_mw[i])), repr(float(self.reserve_mw[i])),
                        repr(float(self.commitment_cost))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DayResult":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != DAY_COLUMNS:
            raise ParseError(f"day result header must be {','.join(DAY_COLUMNS)}")
        if len(rows) < 3:
            raise ParseError("day result needs at least two intervals")
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:]])
        except ValueError as exc:
            raise ParseError(f"day result: {exc}") from exc
        if data.shape[1] != len(DAY_COLUMNS):
            raise ParseError("day result rows have the wrong number of fields")
        ids = np.unique(data[:, 0])
        if len(ids) != 1 or not np.array_equal(data[:, 1], np.arange(len(data))):
            raise ParseError("day result must hold one scenario with consecutive intervals")
        minutes = int(data[1, 2] - data[0, 2])
        return cls(int(ids[0]), data[:, 3], data[:, 4], data[:, 5], data[:, 6], data[:, 7],
                   float(data[0, 8]), minutes)


def _noisy(fc: Forecast, config: PipelineConfig, scenario_id: int, interval: int) -> Forecast:
    if config.forecast_noise <= 0:
        return fc
    rng = np.random.default_rng([config.seed, scenario_id, interval])
    factor = 1.0 + config.forecast_noise * rng.standard_normal(len(fc))
    return Forecast(np.maximum(fc.load * factor, 0.0), fc.renewables, fc.step_minutes)


def _stage(stage, interval, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except GridTwinError as exc:
        raise SimulationError(f"{stage} failed at interval {interval}: {exc}",
                              interval, stage) from exc


def simulate_day(case: Case, commitments: CommitmentSchedule, actuals: Forecast,
                 config: PipelineConfig | None = None, scenario_id: int = 0) -> DayResult:
    """Run look-ahead commitment and real-time dispatch over one day of actuals.

    The look-ahead runs see the actuals themselves as their forecast unless
    ``config.forecast_noise`` is set. Dispatch is single-interval SCED, or
    look-ahead dispatch executing its first interval when enabled.
    """
    config = config or PipelineConfig()
    cad = config.sced_cadence
    n = config.intervals
    if actuals.step_minutes != cad or len(actuals) != n:
        raise ValidationError(f"actuals must cover the day in {n} steps of {cad} minutes")
    if commitments.hours != DAY_MINUTES // 60:
        raise ValidationError("commitments must cover 24 hours")
    commitments.validate(case)
    fc15 = actuals.resample(LAC_STEP_MINUTES)
    window = config.lac_window_hours * 60 // LAC_STEP_MINUTES
    per_lac = config.lac_cadence // cad
    state = SystemState.initial(case, float(actuals.load[0]), actuals.renewables[0])
    sched = commitments
    added = []
    rec = np.zeros((5, n))
    pen = config.penalties
    for i in range(n):
        minute = i * cad
        if i % per_lac == 0:
            fc = _noisy(fc15.window(minute // LAC_STEP_MINUTES, window), config, scenario_id, i)
            res = _stage("lac", i, run_lac, case, state, sched, fc, None, pen,
                         gap=config.lac_gap, time_limit=config.seconds("lac"),
                         backend=config.backend)
            sched = res.schedule
            added.extend(x for x in res.newly_committed if x not in added)
        u = sched.u[:, minute // 60]
        if config.lad_enabled:
            k = min(config.lad_horizon, n - i)
            hours = [(minute + j * cad) // 60 for j in range(k)]
            lad = _stage("lad", i, solve_lad, case, state, actuals.window(i, k), sched.u[:, hours],
                         None, pen, cad, k, config.backend, config.seconds("sced"))
            sol = lad.intervals[0]
        else:
            sol = _stage("sced", i, solve_sced, case, state, actuals.window(i, 1), u, None, pen,
                         cad, config.backend, config.seconds("sced"))
        rec[:, i] = (sol.interval_cost, sol.penalty_cost, sol.transmission_violation,
                     sol.balance_shortfall + sol.balance_surplus, sol.reserve_shortfall)
        state = advance_state(case, state, sol, u, actuals.window(i, 1), cad)
    return DayResult(scenario_id, rec[0], rec[1], rec[2], rec[3], rec[4],
                     sched.commitment_cost(case), cad, sched.u.copy(), tuple(added))


@dataclass
class PipelineRun:
    day_ahead: CommitmentResult
    frac: CommitmentResult
    day: DayResult


def run_pipeline(case: Case, da_forecast: Forecast, actuals: Forecast,
                 config: PipelineConfig | None = None, frac_forecast: Forecast | None = None,
                 scenario_id: int = 0) -> PipelineRun:
    """Day-ahead SCUC, then FRAC, then the rolling intra-day simulation."""
    config = config or PipelineConfig()
    pen = config.penalties
    da = _stage("da", 0, solve_scuc, case, da_forecast, penalties=pen, gap=config.mip_gap,
                time_limit=config.seconds("da"), backend=config.backend)
    frac = _stage("frac", 0, solve_frac, case, da.schedule, frac_forecast or da_forecast,
                  penalties=pen, gap=config.mip_gap, time_limit=config.seconds("frac"),
                  backend=config.backend)
    day = simulate_day(case, frac.schedule, actuals, config, scenario_id)
    return PipelineRun(da, frac, day)


def scenario_forecast(case: Case, scenarios: ScenarioSet, index: int,
                      base: Forecast | None = None) -> Forecast:
    """Scenario ``index`` as a forecast at the scenarios' own resolution.

    Asset ``load`` is system load; other assets are matched to the case's
    renewables by id. Anything the scenarios leave out comes from ``base``.
    """
    if not 0 <= index < scenarios.n:
        raise ValidationError(f"scenario index {index} out of range")
    cols = {a: j for j, a in enumerate(scenarios.assets)}
    v = scenarios.values[index]
    if base is not None:
        base = base.resample(scenarios.step_minutes)
        if len(base) != scenarios.steps:
            raise DimensionMismatch("base forecast and scenarios cover different horizons")
    if "load" in cols:
        load = v[:, cols["load"]]
    elif base is not None:
        load = base.load
    else:
        raise DimensionMismatch("scenarios carry no 'load' column and no base forecast is given")
    ren = np.zeros((scenarios.steps, len(case.renewables)))
    for r, unit in enumerate(case.renewables):
        if unit.id in cols:
            ren[:, r] = v[:, cols[unit.id]]
        elif base is not None and base.renewables.shape[1] == len(case.renewables):
            ren[:, r] = base.renewables[:, r]
        else:
            raise DimensionMismatch(f"no trajectory for renewable {unit.id}")
    return Forecast(load, ren, scenarios.step_minutes)


def scenario_actuals(case: Case, scenarios: ScenarioSet, index: int, minutes: int,
                     base: Forecast | None = None) -> Forecast:
    """Day trajectory of scenario ``index`` at ``minutes`` resolution."""
    if scenarios.steps * scenarios.step_minutes != DAY_MINUTES:
        raise DimensionMismatch("scenarios must span exactly one day")
    return scenario_forecast(case, scenarios, index, base).resample(minutes)


def _run_one(job) -> DayResult:
    case, commitments, actuals, config, sid = job
    try:
        return simulate_day(case, commitments, actuals, config, sid)
    except GridTwinError as exc:
        return DayResult.failed(sid, f"{type(exc).__name__}: {exc}", config.sced_cadence)


def evaluate_ensemble(case: Case, commitments: CommitmentSchedule, scenarios: ScenarioSet,
                      config: PipelineConfig | None = None, workers: int = 1,
                      base: Forecast | None = None) -> list[DayResult]:
    """One DayResult per scenario, in scenario order whatever the worker count.

    Scenarios that fail are returned as failed results rather than raised.
    """
    config = config or PipelineConfig()
    jobs = [(case, commitments, scenario_actuals(case, scenarios, s, config.sced_cadence, base),
             config, s) for s in range(scenarios.n)]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_run_one, jobs))
