"""Real-time dispatch: single-interval SCED and multi-interval look-ahead dispatch."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from gridtwin.errors import NumericalFailure, ValidationError
from gridtwin.grid_model import Case, LossModel
from gridtwin.market_clearing.formulation import (
    CommitmentBlock,
    DispatchBlock,
    Penalties,
    Step,
    add_dispatch_block,
)
from gridtwin.opt_core import LinearProgram, Status, solve_lp

SCED_MINUTES = 5
LAD_INTERVALS = 12
BALANCE_TOL = 1e-6


@dataclass
class SystemState:
    """Operating point threaded through a rolling-horizon simulation.

    ``elapsed`` counts hours spent in the current on/off status.
    """

    minute: int
    output: np.ndarray
    on: np.ndarray
    elapsed: np.ndarray
    bus_load: np.ndarray
    renewables: np.ndarray

    @classmethod
    def initial(cls, case: Case, system_load: float = 0.0, renewables=None) -> "SystemState":
        gens = case.generators
        on = np.array([g.initially_on for g in gens])
        out = np.array([g.initial_output if g.initially_on else 0.0 for g in gens])
        elapsed = np.array([abs(g.initial_status) for g in gens], dtype=float)
        ren = np.zeros(len(case.renewables)) if renewables is None else np.asarray(renewables, float)
        return cls(0, out, on, elapsed, case.bus_loads(system_load), ren)

    @property
    def status_hours(self) -> np.ndarray:
        """Signed integer status (+on hours / -off hours), rounded down, at least 1."""
        h = np.maximum(np.floor(self.elapsed + 1e-9), 1).astype(np.int64)
        return np.where(self.on, h, -h)

    def validate(self, case: Case, tol: float = 1e-6) -> None:
        for g, gen in enumerate(case.generators):
            p = self.output[g]
            if self.on[g] and not (gen.pmin - tol <= p <= gen.pmax + tol):
                raise ValidationError(f"state: generator {gen.id} is on at {p} MW outside "
                                      f"[{gen.pmin}, {gen.pmax}]")
            if not self.on[g] and abs(p) > tol:
                raise ValidationError(f"state: generator {gen.id} is off but outputs {p} MW")


@dataclass(frozen=True)
class Forecast:
    """System load and renewable availability at a fixed resolution."""

    load: np.ndarray
    renewables: np.ndarray  # steps x assets
    step_minutes: int = 60

    def __post_init__(self):
        load = np.atleast_1d(np.asarray(self.load, dtype=float))
        ren = np.asarray(self.renewables, dtype=float)
        if ren.size == 0:
            ren = np.zeros((len(load), 0))
        elif ren.ndim == 1:
            ren = ren[None, :] if len(load) == 1 else ren[:, None]
        if ren.shape[0] != len(load):
            raise ValidationError("forecast: renewables and load lengths differ")
        if np.any(load < 0) or np.any(ren < 0):
            raise ValidationError("forecast: negative load or renewable value")
        object.__setattr__(self, "load", load)
        object.__setattr__(self, "renewables", ren)

    @classmethod
    def constant(cls, load: float, steps: int, renewables=(), step_minutes: int = 60) -> "Forecast":
        ren = np.tile(np.asarray(renewables, dtype=float), (steps, 1)) if len(renewables) else ()
        return cls(np.full(steps, float(load)), ren, step_minutes)

    def __len__(self) -> int:
        return len(self.load)

    def window(self, start: int, n: int) -> "Forecast":
        return Forecast(self.load[start:start + n], self.renewables[start:start + n], self.step_minutes)

    def resample(self, step_minutes: int) -> "Forecast":
        """Linear interpolation (finer) or block averaging (coarser)."""
        if step_minutes == self.step_minutes:
            return self
        if step_minutes > self.step_minutes:
            k = step_minutes // self.step_minutes
            if k * self.step_minutes != step_minutes or len(self) % k:
                raise ValidationError("forecast: resolution must divide evenly")
            load = self.load.reshape(-1, k).mean(axis=1)
            ren = self.renewables.reshape(len(load), k, -1).mean(axis=1)
            return Forecast(load, ren, step_minutes)
        k = self.step_minutes // step_minutes
        if k * step_minutes != self.step_minutes:
            raise ValidationError("forecast: resolution must divide evenly")
        t_src = np.arange(len(self)) * self.step_minutes
        t_dst = np.arange(len(self) * k) * step_minutes
        load = np.interp(t_dst, t_src, self.load)
        ren = np.column_stack([np.interp(t_dst, t_src, c) for c in self.renewables.T]) \
            if self.renewables.shape[1] else np.zeros((len(t_dst), 0))
        return Forecast(load, ren, step_minutes)

    def net_load(self) -> np.ndarray:
        return self.load - self.renewables.sum(axis=1)


@dataclass
class DispatchSolution:
    """One dispatch interval. ``objective`` is the $/h rate; ``interval_cost`` is in $."""

    p: np.ndarray
    lmp: np.ndarray
    energy_price: float
    congestion: np.ndarray
    loss_component: np.ndarray
    reserve_price: float
    line_slack: np.ndarray
    flows: np.ndarray
    balance_shortfall: float
    balance_surplus: float
    reserve_shortfall: float
    reserves: np.ndarray
    renewables: np.ndarray
    objective: float
    hours: float
    status: Status
    penalty_rate: float = 0.0  # $/h of violation penalties
    commitment: np.ndarray = field(default=None, repr=False)

    @property
    def interval_cost(self) -> float:
        return self.objective * self.hours

    @property
    def penalty_cost(self) -> float:
        return self.penalty_rate * self.hours

    @property
    def transmission_violation(self) -> float:
        return float(np.sum(self.line_slack))

    def summary(self) -> dict:
        return {
            "cost": self.interval_cost,
            "penalty_cost": self.penalty_cost,
            "transmission_violation_mw": self.transmission_violation,
            "balance_violation_mw": self.balance_shortfall + self.balance_surplus,
            "reserve_shortfall_mw": self.reserve_shortfall,
        }


@dataclass
class LadSolution:
    intervals: list
    objective: float  # $ over the horizon
    status: Status


def _interval_commit(case, commitments):
    u = np.asarray(commitments, dtype=float).reshape(case.n_gens, -1)
    if np.any((u != 0) & (u != 1)):
        raise ValidationError("commitments must be 0/1")
    return u


def _ptdf(case):
    return case.ptdf.matrix if case.n_lines else np.zeros((0, case.n_buses))


def _steps(forecast: Forecast, hours: float):
    return [Step(float(forecast.load[s]), forecast.renewables[s], s, True, hours)
            for s in range(len(forecast))]


def build_sced(case: Case, state: SystemState, forecast: Forecast, commitments,
               loss_model: LossModel | None = None, penalties: Penalties | None = None,
               minutes: int = SCED_MINUTES) -> LinearProgram:
    """Single-interval dispatch LP in $/h.

    ``commitments`` gives on/off per generator for the interval; units
    switching on are limited to max(pmin, ramp window) on their first interval.
    """
    if len(forecast) != 1:
        raise ValidationError("SCED takes a one-interval forecast")
    u = _interval_commit(case, commitments)
    lp = LinearProgram("sced")
    block = CommitmentBlock.constant(u, state.on)
    steps = [Step(float(forecast.load[0]), forecast.renewables[0], 0, True, minutes / 60.0)]
    # SCED prices $/h: weight steps by 1/hours so the objective is a rate
    disp = add_dispatch_block(lp, case, steps, block, state.output, penalties, loss_model,
                              scale=60.0 / minutes)
    lp.meta.update(dispatch=disp, commit=block, kind="sced", ptdf=_ptdf(case))
    return lp


def build_lad(case: Case, state: SystemState, forecast: Forecast, commitments,
              loss_model: LossModel | None = None, penalties: Penalties | None = None,
              minutes: int = SCED_MINUTES, intervals: int = LAD_INTERVALS) -> LinearProgram:
    """Multi-interval dispatch LP in $ (each interval weighted by its duration)."""
    if len(forecast) != intervals:
        raise ValidationError(f"look-ahead dispatch needs exactly {intervals} intervals, "
                              f"got {len(forecast)}")
    u = _interval_commit(case, commitments)
    if u.shape[1] == 1:
        u = np.repeat(u, intervals, axis=1)
    if u.shape[1] != intervals:
        raise ValidationError("commitments must cover every look-ahead interval")
    lp = LinearProgram("lad")
    block = CommitmentBlock.constant(u, state.on)
    disp = add_dispatch_block(lp, case, _steps(forecast, minutes / 60.0), block, state.output,
                              penalties, loss_model)
    lp.meta.update(dispatch=disp, commit=block, kind="lad", ptdf=_ptdf(case))
    return lp


def extract_interval(lp: LinearProgram, sol, s: int, weight: float) -> DispatchSolution:
    """Interval ``s`` of a solved dispatch LP. ``weight`` converts duals to $/MWh."""
    disp: DispatchBlock = lp.meta["dispatch"]
    block: CommitmentBlock = lp.meta["commit"]
    case_lines = disp.line_row.shape[0]
    x, y = sol.x, sol.duals
    p = disp.values(x, disp.p_idx[:, s])
    over = disp.values(x, disp.over_idx[:, s]) if case_lines else np.zeros(0)
    under = disp.values(x, disp.under_idx[:, s]) if case_lines else np.zeros(0)
    flows = disp.values(x, disp.flow_idx[:, s]) + over - under if case_lines else np.zeros(0)
    lam = y[disp.balance_row[s]] / weight
    yl = y[disp.line_row[:, s]] / weight if case_lines else np.zeros(0)
    ptdf = lp.meta["ptdf"]
    congestion = yl @ ptdf if case_lines else np.zeros(len(disp.loss_factors))
    loss = -lam * disp.loss_factors
    res_price = y[disp.reserve_row[s]] / weight if disp.reserve_row[s] >= 0 else 0.0
    short = float(x[disp.short_idx[s]])
    surplus = float(x[disp.surplus_idx[s]])
    res_short = float(x[disp.res_short_idx[s]]) if disp.res_short_idx[s] >= 0 else 0.0
    pen = disp.penalties
    penalty_rate = (pen.balance * (short + surplus) + pen.transmission * float(over.sum() + under.sum())
                    + pen.reserve * res_short)
    st = disp.steps[s]
    return DispatchSolution(
        p=p,
        lmp=lam + loss + congestion,
        energy_price=float(lam),
        congestion=congestion,
        loss_component=loss,
        reserve_price=float(res_price),
        line_slack=over + under,
        flows=flows,
        balance_shortfall=short,
        balance_surplus=surplus,
        reserve_shortfall=res_short,
        reserves=disp.values(x, disp.r_idx[:, s]),
        renewables=disp.values(x, disp.ren_idx[:, s]),
        objective=float("nan"),
        hours=st.hours,
        status=sol.status,
        penalty_rate=penalty_rate,
        commitment=block.u_val[:, st.block].astype(np.int8),
    )


def energy_rate(case: Case, p) -> float:
    """Energy cost in $/h of a dispatch under the piecewise curves (pmin at the first price)."""
    total = 0.0
    for gen, mw in zip(case.generators, np.asarray(p, dtype=float)):
        if mw <= 0:
            continue
        total += gen.pmin * gen.first_price
        rest = mw - gen.pmin
        for length, price in gen.cost_curve if len(gen.cost_curve) > 1 else ((rest, gen.first_price),):
            take = min(max(rest, 0.0), length)
            total += take * price
            rest -= take
    return total


def _solve(lp, backend, time_limit):
    sol = solve_lp(lp, backend, time_limit)
    if sol.status is not Status.OPTIMAL:
        raise NumericalFailure(f"{lp.meta.get('kind', 'dispatch')} LP ended {sol.status.value}; "
                               "violation slacks should make it always feasible")
    return sol


def solve_sced(case: Case, state: SystemState, forecast: Forecast, commitments,
               loss_model: LossModel | None = None, penalties: Penalties | None = None,
               minutes: int = SCED_MINUTES, backend: str = "auto",
               time_limit: float | None = None) -> DispatchSolution:
    lp = build_sced(case, state, forecast, commitments, loss_model, penalties, minutes)
    sol = _solve(lp, backend, time_limit)
    out = extract_interval(lp, sol, 0, 1.0)
    out.objective = float(sol.objective)
    return out


def solve_lad(case: Case, state: SystemState, forecast: Forecast, commitments,
              loss_model: LossModel | None = None, penalties: Penalties | None = None,
              minutes: int = SCED_MINUTES, intervals: int = LAD_INTERVALS, backend: str = "auto",
              time_limit: float | None = None) -> LadSolution:
    lp = build_lad(case, state, forecast, commitments, loss_model, penalties, minutes, intervals)
    sol = _solve(lp, backend, time_limit)
    hours = minutes / 60.0
    out = []
    for s in range(intervals):
        d = extract_interval(lp, sol, s, hours)
        d.objective = energy_rate(case, d.p) + d.penalty_rate
        out.append(d)
    return LadSolution(out, float(sol.objective), sol.status)


def advance_state(case: Case, state: SystemState, sol: DispatchSolution, commitments,
                  forecast: Forecast, minutes: int = SCED_MINUTES) -> SystemState:
    """State after executing ``sol`` for one interval."""
    on = np.asarray(commitments, dtype=float).reshape(-1) > 0.5
    dt = minutes / 60.0
    return replace(
        state,
        minute=state.minute + minutes,
        output=np.where(on, sol.p, 0.0),
        on=on,
        elapsed=np.where(on == state.on, state.elapsed + dt, dt),
        bus_load=case.bus_loads(float(forecast.load[0])),
        renewables=sol.renewables,
    )


def run_myopic(case: Case, state: SystemState, forecast: Forecast, commitments,
               loss_model: LossModel | None = None, penalties: Penalties | None = None,
               minutes: int = SCED_MINUTES, backend: str = "auto"):
    """Sequence of single-interval SCEDs, each seeing only its own interval."""
    u = _interval_commit(case, commitments)
    if u.shape[1] == 1:
        u = np.repeat(u, len(forecast), axis=1)
    sols = []
    for s in range(len(forecast)):
        fc = forecast.window(s, 1)
        d = solve_sced(case, state, fc, u[:, s], loss_model, penalties, minutes, backend)
        sols.append(d)
        state = advance_state(case, state, d, u[:, s], fc, minutes)
    return sols, state


def check_dispatch(case: Case, sol: DispatchSolution, forecast: Forecast,
                   loss_model: LossModel | None = None, tol: float = BALANCE_TOL) -> None:
    """Post-hoc check of bounds and loss-adjusted power balance."""
    u = sol.commitment
    for g, gen in enumerate(case.generators):
        p = sol.p[g]
        if u is not None and u[g] == 0:
            if abs(p) > tol:
                raise ValidationError(f"generator {gen.id} is off but dispatched at {p} MW")
            continue
        if not (gen.pmin - tol <= p <= gen.pmax + tol):
            raise ValidationError(f"generator {gen.id} dispatched at {p} MW outside bounds")
    load = float(forecast.load[0])
    inj = case.injections(sol.p, load, sol.renewables if len(case.renewables) else None)
    losses = loss_model.losses(inj) if loss_model is not None else 0.0
    mismatch = (sol.p.sum() + sol.renewables.sum() + sol.balance_shortfall - sol.balance_surplus
                - load - losses)
    if abs(mismatch) > tol:
        raise ValidationError(f"power balance mismatch {mismatch:.3e} MW")
