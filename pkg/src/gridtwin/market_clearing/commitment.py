"""Unit commitment: day-ahead SCUC, add-only FRAC and rolling look-ahead commitment."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gridtwin.errors import InfeasibleFixing, NumericalFailure, ValidationError
from gridtwin.grid_model import Case, LossModel
from gridtwin.market_clearing.dispatch import Forecast, SystemState
from gridtwin.market_clearing.formulation import (
    CommitmentBlock,
    DispatchBlock,
    Penalties,
    Step,
    add_commitment_block,
    add_dispatch_block,
    commitment_feasible,
)
from gridtwin.opt_core import MixedIntegerProgram, Status, solve_lp, solve_milp

LAC_STEP_MINUTES = 15
LAC_WINDOW_STEPS = 12


@dataclass
class CommitmentSchedule:
    """Hourly on/off matrix (generators x hours) with startup indicators."""

    gen_ids: tuple
    u: np.ndarray
    startup: np.ndarray
    start_hour: int = 0

    @classmethod
    def from_u(cls, case: Case, u, start_hour: int = 0, init_status=None) -> "CommitmentSchedule":
        u = np.asarray(u).astype(np.int8)
        if u.shape[0] != case.n_gens:
            raise ValidationError("schedule rows must match the generators")
        init = _init_status(case, init_status)
        prev = np.column_stack([(init > 0).astype(np.int8), u[:, :-1]])
        startup = ((u == 1) & (prev == 0)).astype(np.int8)
        return cls(tuple(g.id for g in case.generators), u, startup, start_hour)

    @property
    def hours(self) -> int:
        return self.u.shape[1]

    def validate(self, case: Case, init_status=None) -> None:
        """Check startup consistency and minimum up/down times."""
        init = _init_status(case, init_status)
        again = CommitmentSchedule.from_u(case, self.u, self.start_hour, init)
        if not np.array_equal(again.startup, self.startup):
            raise ValidationError("startup indicators disagree with on/off transitions")
        for g, gen in enumerate(case.generators):
            allowed = [{int(v)} for v in self.u[g]]
            if not commitment_feasible(gen.min_up, gen.min_down, int(init[g]), allowed):
                raise InfeasibleFixing(f"generator {gen.id}: schedule violates min_up={gen.min_up}"
                                       f"/min_down={gen.min_down}")

    def covers(self, other: "CommitmentSchedule") -> bool:
        """True when every commitment in ``other`` is also on here."""
        return bool(np.all(self.u >= other.u))

    def commitment_cost(self, case: Case) -> float:
        nl = np.array([g.no_load_cost for g in case.generators])
        su = np.array([g.startup_cost for g in case.generators])
        return float(nl @ self.u.sum(axis=1) + su @ self.startup.sum(axis=1))

    def to_dict(self) -> dict:
        return {"gen_ids": list(self.gen_ids), "start_hour": self.start_hour,
                "u": self.u.tolist(), "startup": self.startup.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "CommitmentSchedule":
        try:
            return cls(tuple(data["gen_ids"]), np.array(data["u"], dtype=np.int8),
                       np.array(data["startup"], dtype=np.int8), int(data.get("start_hour", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed schedule: {exc}") from exc


def _init_status(case, init_status):
    if init_status is None:
        return np.array([g.initial_status for g in case.generators], dtype=np.int64)
    return np.asarray(init_status, dtype=np.int64)


def status_before(case: Case, schedule: CommitmentSchedule, hour: int) -> np.ndarray:
    """Signed on/off duration in hours at the start of ``hour`` of the schedule."""
    out = _init_status(case, None).copy()
    for t in range(hour):
        on = schedule.u[:, t] == 1
        out = np.where(on, np.where(out > 0, out + 1, 1), np.where(out < 0, out - 1, -1))
    return out


@dataclass
class CommitmentResult:
    schedule: CommitmentSchedule
    objective: float
    startup_cost: float
    no_load_cost: float
    energy_cost: float
    penalty_cost: float
    dispatch: np.ndarray          # generators x steps MW
    line_slack: np.ndarray        # lines x steps MW
    balance_slack: np.ndarray     # steps MW (shortfall minus surplus)
    reserve_shortfall: np.ndarray
    status: Status
    bound: float = float("nan")
    gap: float = float("nan")
    nodes: int = 0
    newly_committed: list = field(default_factory=list)
    lmp: np.ndarray | None = None  # buses x steps, from the pricing run


def _check_forecast(case, forecast):
    if len(forecast) < 1:
        raise ValidationError("commitment horizon must be at least one period")
    if forecast.renewables.shape[1] not in (0, len(case.renewables)):
        raise ValidationError("forecast renewables do not match the case")


def _ren(forecast, s, case):
    r = forecast.renewables[s]
    return r if len(r) else np.zeros(len(case.renewables))


def build_scuc(case: Case, forecast: Forecast, fixed_commitments=None, floor=None,
               loss_model: LossModel | None = None, penalties: Penalties | None = None,
               init_status=None, init_output=None) -> MixedIntegerProgram:
    """Hourly unit-commitment MILP.

    ``fixed_commitments`` is a generators x hours array (-1 = free) pinning u;
    ``floor`` lower-bounds u so commitments can only be added.
    """
    _check_forecast(case, forecast)
    T = len(forecast)
    hours = forecast.step_minutes / 60.0
    init = _init_status(case, init_status)
    out0 = (np.array([g.initial_output for g in case.generators])
            if init_output is None else np.asarray(init_output, float))
    out0 = np.where(init > 0, out0, 0.0)
    mip = MixedIntegerProgram("scuc")
    commit = add_commitment_block(mip, case, T, init, fixed_commitments, floor,
                                  period_hours=np.full(T, hours))
    steps = [Step(float(forecast.load[s]), _ren(forecast, s, case), s, True, hours) for s in range(T)]
    disp = add_dispatch_block(mip, case, steps, commit, out0, penalties, loss_model)
    mip.meta.update(kind="scuc", commit=commit, dispatch=disp, init_status=init,
                    period_hours=np.full(T, hours))
    return mip


def _result(case, mip, sol, periods) -> CommitmentResult:
    commit: CommitmentBlock = mip.meta["commit"]
    disp: DispatchBlock = mip.meta["dispatch"]
    x = sol.x
    u = commit.values(x)[:, :periods]
    schedule = CommitmentSchedule.from_u(case, u, 0, mip.meta["init_status"])
    cost = mip.cost
    startup = float(sum(cost[j] * round(x[j]) for j in commit.v_idx[:, :periods].ravel()))
    nl = np.array([g.no_load_cost for g in case.generators])
    no_load = float(nl @ (u * mip.meta["period_hours"][:periods]).sum(axis=1))
    pen = disp.penalties
    hours = np.array([st.hours for st in disp.steps])
    over = disp.values(x, disp.over_idx) + disp.values(x, disp.under_idx)
    short = x[disp.short_idx]
    surplus = x[disp.surplus_idx]
    res_short = disp.values(x, disp.res_short_idx)
    penalty = float(hours @ (pen.transmission * over.sum(axis=0) + pen.balance * (short + surplus)
                             + pen.reserve * res_short))
    energy = float(sol.objective - startup - no_load - penalty)
    return CommitmentResult(
        schedule=schedule,
        objective=float(sol.objective),
        startup_cost=startup,
        no_load_cost=no_load,
        energy_cost=energy,
        penalty_cost=penalty,
        dispatch=disp.values(x, disp.p_idx),
        line_slack=over,
        balance_slack=short - surplus,
        reserve_shortfall=res_short,
        status=sol.status,
        bound=float(sol.bound),
        gap=float(sol.gap),
        nodes=int(sol.nodes),
    )


def _solve(mip, gap, time_limit, backend):
    sol = solve_milp(mip, gap=gap, time_limit=time_limit, backend=backend)
    if sol.x is None:
        raise NumericalFailure(f"{mip.meta.get('kind')} ended {sol.status.value}; violation "
                               "slacks should make it always feasible")
    return sol


def pricing_run(case: Case, mip: MixedIntegerProgram, x, backend: str = "auto") -> np.ndarray:
    """Bus LMPs (buses x steps) from the dispatch LP with commitments fixed at ``x``."""
    lp = mip.relaxation()
    for j in mip.integer:
        v = float(round(x[j]))
        lp.set_bounds(j, v, v)
    sol = solve_lp(lp, backend)
    if not sol.optimal:
        raise NumericalFailure(f"pricing run ended {sol.status.value}")
    disp: DispatchBlock = mip.meta["dispatch"]
    S = len(disp.steps)
    lmp = np.zeros((case.n_buses, S))
    ptdf = case.ptdf.matrix if case.n_lines else np.zeros((0, case.n_buses))
    for s, st in enumerate(disp.steps):
        lam = sol.duals[disp.balance_row[s]] / st.hours
        cong = (sol.duals[disp.line_row[:, s]] / st.hours) @ ptdf if case.n_lines else 0.0
        lmp[:, s] = lam * (1.0 - disp.loss_factors) + cong
    return lmp


def solve_scuc(case: Case, forecast: Forecast, fixed_commitments=None, floor=None,
               loss_model: LossModel | None = None, penalties: Penalties | None = None,
               init_status=None, init_output=None, gap: float = 1e-6,
               time_limit: float | None = None, backend: str = "auto",
               prices: bool = False) -> CommitmentResult:
    mip = build_scuc(case, forecast, fixed_commitments, floor, loss_model, penalties,
                     init_status, init_output)
    sol = _solve(mip, gap, time_limit, backend)
    res = _result(case, mip, sol, len(forecast))
    if prices:
        res.lmp = pricing_run(case, mip, sol.x, backend)
    return res


def solve_frac(case: Case, prior: CommitmentSchedule, forecast: Forecast,
               loss_model: LossModel | None = None, penalties: Penalties | None = None,
               gap: float = 1e-6, time_limit: float | None = None,
               backend: str = "auto", prices: bool = False) -> CommitmentResult:
    """Recommit against an updated forecast, only ever adding commitments to ``prior``."""
    if prior.hours != len(forecast):
        raise ValidationError("prior schedule and forecast horizons differ")
    prior.validate(case)
    res = solve_scuc(case, forecast, floor=prior.u, loss_model=loss_model, penalties=penalties,
                     gap=gap, time_limit=time_limit, backend=backend, prices=prices)
    added = np.argwhere((res.schedule.u == 1) & (prior.u == 0))
    res.newly_committed = [(case.generators[g].id, int(t)) for g, t in added]
    return res


def run_lac(case: Case, state: SystemState, committed: CommitmentSchedule, forecast: Forecast,
            loss_model: LossModel | None = None, penalties: Penalties | None = None,
            gap: float = 1e-6, time_limit: float | None = None,
            backend: str = "auto") -> CommitmentResult:
    """Rolling look-ahead commitment from ``state.minute`` over a 15-minute window.

    Hourly commitment periods overlapping the window are re-optimized. A
    period is pinned to ``committed`` when it is already under way or when a
    unit's notification time exceeds the lead time to its start. Hours after
    the window that could interact through minimum up/down times are carried
    as pinned tail periods. Startup costs count only for starts inside the
    optimized window.
    """
    if forecast.step_minutes != LAC_STEP_MINUTES:
        raise ValidationError(f"look-ahead commitment uses {LAC_STEP_MINUTES}-minute steps")
    _check_forecast(case, forecast)
    now = int(state.minute)
    horizon = committed.hours
    step_h = LAC_STEP_MINUTES / 60.0
    starts = [now + LAC_STEP_MINUTES * k for k in range(len(forecast))]
    starts = [m for m in starts if m // 60 < horizon]
    if not starts:
        raise ValidationError("look-ahead window lies beyond the committed horizon")
    h0 = now // 60
    h_last = starts[-1] // 60
    tail = max(max(g.min_up, g.min_down) for g in case.generators)
    h_end = min(horizon, h_last + 1 + tail)
    n_periods = h_end - h0
    init = status_before(case, committed, h0)

    fixed = -np.ones((case.n_gens, n_periods), dtype=np.int64)
    for k in range(n_periods):
        h = h0 + k
        lead = h * 60 - now
        for g, gen in enumerate(case.generators):
            if lead < 0 or h > h_last or gen.notification_time > lead:
                fixed[g, k] = committed.u[g, h]
    period_hours = np.zeros(n_periods)
    steps = []
    for s, m in enumerate(starts):
        k = m // 60 - h0
        period_hours[k] += step_h
        block_start = m % 60 == 0
        steps.append(Step(float(forecast.load[s]), _ren(forecast, s, case), k, block_start, step_h))
    startup_free = np.zeros(n_periods, dtype=bool)
    startup_free[0] = now % 60 != 0

    mip = MixedIntegerProgram("lac")
    commit = add_commitment_block(mip, case, n_periods, init, fixed, None, period_hours,
                                  startup_free)
    # the first step continues from the measured state, not from the period boundary
    on_now = np.asarray(state.on, dtype=bool)
    commit.init_on = on_now
    disp = add_dispatch_block(mip, case, steps, commit, np.where(on_now, state.output, 0.0),
                              penalties, loss_model)
    mip.meta.update(kind="lac", commit=commit, dispatch=disp, init_status=init,
                    period_hours=period_hours)
    sol = _solve(mip, gap, time_limit, backend)
    res = _result(case, mip, sol, n_periods)
    u = committed.u.copy()
    u[:, h0:h_end] = res.schedule.u
    res.schedule = CommitmentSchedule.from_u(case, u, committed.start_hour)
    added = np.argwhere((u == 1) & (committed.u == 0))
    res.newly_committed = [(case.generators[g].id, int(t)) for g, t in added]
    return res
