"""Two-stage stochastic recommitment: extensive form, multi-cut Benders,
perfect-information benchmark and the deterministic comparison plan."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from gridtwin.errors import InternalError, IterationLimit, NumericalFailure, ValidationError
from gridtwin.grid_model import Case, LossModel
from gridtwin.market_clearing import CommitmentSchedule, Forecast, Penalties, solve_frac
from gridtwin.market_clearing.formulation import (
    CommitmentBlock,
    Step,
    add_commitment_block,
    add_dispatch_block,
    fixed_commitment_block,
)
from gridtwin.opt_core import INF, LinearProgram, MixedIntegerProgram, solve_lp, solve_milp
from gridtwin.stochastic.risk import RiskConfig, cvar, cvar_epigraph_terms

MASTER_GAP = 1e-10
RC_FLOOR = 1e-12


@dataclass
class TsspInstance:
    """Shared add-only commitment over ``prior`` and one dispatch recourse per scenario."""

    case: Case
    prior: CommitmentSchedule
    scenarios: tuple                       # hourly Forecasts, equally likely
    loss_model: LossModel | None = None
    penalties: Penalties | None = None

    def __post_init__(self):
        self.scenarios = tuple(self.scenarios)
        if not self.scenarios:
            raise ValidationError("a stochastic instance needs at least one scenario")
        for k, fc in enumerate(self.scenarios):
            if len(fc) != self.prior.hours:
                raise ValidationError(f"scenario {k} has {len(fc)} hours, the commitment "
                                      f"horizon is {self.prior.hours}")
            if fc.step_minutes != 60:
                raise ValidationError("scenarios must be hourly")

    @classmethod
    def from_loads(cls, case: Case, prior: CommitmentSchedule, loads, renewables=None,
                   **kw) -> "TsspInstance":
        loads = np.atleast_2d(np.asarray(loads, dtype=float))
        fcs = []
        for k, row in enumerate(loads):
            ren = () if renewables is None else np.asarray(renewables, float)[k]
            fcs.append(Forecast(row, ren))
        return cls(case, prior, tuple(fcs), **kw)

    @property
    def n(self) -> int:
        return len(self.scenarios)

    @property
    def hours(self) -> int:
        return self.prior.hours

    def init_status(self) -> np.ndarray:
        return np.array([g.initial_status for g in self.case.generators], dtype=np.int64)

    def init_output(self) -> np.ndarray:
        return np.array([g.initial_output if g.initially_on else 0.0 for g in self.case.generators])

    def steps(self, k: int):
        fc = self.scenarios[k]
        return [Step(float(fc.load[t]), _ren(self.case, fc, t), t, True, 1.0)
                for t in range(self.hours)]

    def mean_forecast(self) -> Forecast:
        load = np.mean([fc.load for fc in self.scenarios], axis=0)
        ren = np.mean([fc.renewables for fc in self.scenarios], axis=0)
        return Forecast(load, ren if ren.size else ())


def _ren(case, fc, t):
    r = fc.renewables[t]
    return r if len(r) else np.zeros(len(case.renewables))


@dataclass
class StochasticSolution:
    """Plan and its per-scenario costs ($).

    For perfect information there is no common plan: ``schedules`` holds one
    schedule per scenario and ``commitment_costs`` their commitment costs.
    """

    schedule: CommitmentSchedule | None
    commitment_costs: np.ndarray
    recourse_costs: np.ndarray
    lower_bound: float = math.nan
    log: list = field(default_factory=list)
    status: str = "optimal"
    schedules: list | None = None

    @property
    def commitment_cost(self) -> float:
        return float(np.mean(self.commitment_costs))

    @property
    def expected_recourse(self) -> float:
        return float(np.mean(self.recourse_costs))

    @property
    def scenario_totals(self) -> np.ndarray:
        return self.commitment_costs + self.recourse_costs

    @property
    def expected_cost(self) -> float:
        return float(np.mean(self.scenario_totals))

    def risk(self, alpha: float) -> float:
        return cvar(self.scenario_totals, alpha)

    def summary(self) -> dict:
        return {
            "status": self.status,
            "expected_cost": self.expected_cost,
            "commitment_cost": self.commitment_cost,
            "expected_recourse": self.expected_recourse,
            "recourse_costs": self.recourse_costs.tolist(),
            "lower_bound": None if math.isnan(self.lower_bound) else self.lower_bound,
            "iterations": len(self.log),
            "schedule": None if self.schedule is None else self.schedule.to_dict(),
        }


def log_to_csv(log) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("iter", "lower", "upper", "n_cuts"))
    for r in log:
        w.writerow((r["iter"], repr(float(r["lower"])), repr(float(r["upper"])), r["n_cuts"]))
    return buf.getvalue()


def _uniform(case, prior, u):
    return CommitmentSchedule.from_u(case, u, prior.start_hour)


# ---------------------------------------------------------------------------
# extensive form

def build_extensive_form(inst: TsspInstance, risk: RiskConfig | None = None) -> MixedIntegerProgram:
    """One commitment block shared by a dispatch block per scenario (weight 1/n).

    With ``risk.cvar_weight > 0`` the objective also carries
    cvar_weight * CVaR_alpha of the scenario dispatch costs.
    """
    case, n = inst.case, inst.n
    mip = MixedIntegerProgram("tssp")
    commit = add_commitment_block(mip, case, inst.hours, inst.init_status(), None, inst.prior.u,
                                  period_hours=np.ones(inst.hours))
    out0 = inst.init_output()
    blocks, costs = [], []
    for k in range(n):
        before = np.array(mip.cost)
        const0 = mip.objective_constant
        blocks.append(add_dispatch_block(mip, case, inst.steps(k), commit, out0, inst.penalties,
                                         inst.loss_model, tag=f"@{k}", scale=1.0 / n))
        after = np.array(mip.cost)
        delta = after.copy()
        delta[:len(before)] -= before
        coeffs = {int(j): float(delta[j] * n) for j in np.flatnonzero(delta)}
        costs.append((coeffs, (mip.objective_constant - const0) * n))
    if risk is not None and risk.cvar_weight > 0:
        cvar_epigraph_terms(risk.alpha, n, risk.cvar_weight).attach(mip, costs, tag="@risk")
    mip.meta.update(kind="tssp", commit=commit, dispatch=blocks, costs=costs)
    return mip


def solve_extensive_form(inst: TsspInstance, gap: float = 1e-9, time_limit: float | None = None,
                         backend: str = "auto", risk: RiskConfig | None = None
                         ) -> StochasticSolution:
    mip = build_extensive_form(inst, risk)
    sol = solve_milp(mip, gap=gap, time_limit=time_limit, backend=backend)
    if sol.x is None:
        raise NumericalFailure(f"extensive form ended {sol.status.value}")
    commit: CommitmentBlock = mip.meta["commit"]
    u = commit.values(sol.x)
    sched = _uniform(inst.case, inst.prior, u)
    rec = np.array([sum(a * sol.x[j] for j, a in c.items()) + k for c, k in mip.meta["costs"]])
    cc = sched.commitment_cost(inst.case)
    return StochasticSolution(sched, np.full(inst.n, cc), rec, float(sol.bound),
                              status=sol.status.value)


# ---------------------------------------------------------------------------
# recourse evaluation

class Recourse:
    """Dispatch LP of one scenario with the commitment entering as fixed variables.

    Built once; :meth:`evaluate` re-fixes the commitment and re-solves. The
    reduced costs of the fixed u/v/w variables give a subgradient of the
    recourse cost with respect to the commitment.
    """

    def __init__(self, inst: TsspInstance, k: int, backend: str = "auto"):
        self.inst = inst
        self.backend = backend
        self.lp = LinearProgram(f"recourse{k}")
        G, T = inst.case.n_gens, inst.hours
        init_on = inst.init_status() > 0
        self.block, _ = fixed_commitment_block(
            self.lp, CommitmentBlock.constant(np.zeros((G, T)), init_on), inst.prior.u)
        add_dispatch_block(self.lp, inst.case, inst.steps(k), self.block, inst.init_output(),
                           inst.penalties, inst.loss_model)

    def evaluate(self, u):
        const = CommitmentBlock.constant(u, self.block.init_on)
        for idx, vals in ((self.block.u_idx, const.u_val), (self.block.v_idx, const.v_val),
                          (self.block.w_idx, const.w_val)):
            for j, v in zip(idx.ravel(), vals.ravel()):
                self.lp.set_bounds(int(j), float(v), float(v))
        sol = solve_lp(self.lp, self.backend)
        if not sol.optimal:
            raise InternalError(f"recourse LP ended {sol.status.value}; slacks should make "
                                "every commitment feasible")
        rc = sol.reduced_costs
        grads = {name: rc[idx] for name, idx in (("u", self.block.u_idx), ("v", self.block.v_idx),
                                                   ("w", self.block.w_idx))}
        vals = {"u": const.u_val, "v": const.v_val, "w": const.w_val}
        return float(sol.objective), grads, vals


def evaluate_schedule(inst: TsspInstance, schedule: CommitmentSchedule,
                      backend: str = "auto") -> StochasticSolution:
    """Ex-post cost of a fixed plan across every scenario."""
    if schedule.hours != inst.hours:
        raise ValidationError("schedule horizon differs from the scenarios")
    rec = np.array([Recourse(inst, k, backend).evaluate(schedule.u)[0] for k in range(inst.n)])
    cc = schedule.commitment_cost(inst.case)
    return StochasticSolution(schedule, np.full(inst.n, cc), rec)


# ---------------------------------------------------------------------------
# Benders

def _recourse_floor(inst: TsspInstance) -> float:
    """A valid lower bound on any scenario's recourse cost."""
    low = 0.0
    for gen in inst.case.generators:
        cheapest = min(p for _, p in gen.cost_curve)
        if cheapest < 0:
            low += cheapest * gen.pmax
    return low * inst.hours


def solve_benders(inst: TsspInstance, gap: float = 1e-6, max_iters: int = 100,
                  backend: str = "auto", warm_start: bool = True) -> StochasticSolution:
    """Multi-cut L-shaped method with optimality cuts only.

    Every dispatch LP has penalized slacks, so recourse is complete and no
    feasibility cuts are needed. With ``warm_start`` the first cuts are taken
    at the deterministic plan for the mean scenario.
    """
    case, n = inst.case, inst.n
    master = MixedIntegerProgram("benders_master")
    commit = add_commitment_block(master, case, inst.hours, inst.init_status(), None,
                                  inst.prior.u, period_hours=np.ones(inst.hours))
    floor = _recourse_floor(inst)
    theta = [master.add_var(f"theta[{k}]", floor, INF, 1.0 / n) for k in range(n)]
    subs = [Recourse(inst, k, backend) for k in range(n)]
    handles = {"u": commit.u_idx, "v": commit.v_idx, "w": commit.w_idx}

    best_u, best_rec, upper = None, None, math.inf
    lower = -math.inf
    log, n_cuts = [], 0

    def add_cuts(u):
        nonlocal best_u, best_rec, upper, n_cuts
        rec = np.empty(n)
        for k in range(n):  # scenario order fixes cut order
            q, grads, vals = subs[k].evaluate(u)
            rec[k] = q
            row = {theta[k]: 1.0}
            rhs = q
            for name, g in grads.items():
                for j, a, x0 in zip(handles[name].ravel(), g.ravel(), vals[name].ravel()):
                    if abs(a) > RC_FLOOR:
                        row[int(j)] = row.get(int(j), 0.0) - float(a)
                        rhs -= float(a) * float(x0)
            master.add_constraint(row, ">=", rhs, name=f"cut[{k},{n_cuts}]")
            n_cuts += 1
        total = CommitmentSchedule.from_u(case, u).commitment_cost(case) + rec.mean()
        if total < upper:
            best_u, best_rec, upper = np.array(u), rec, float(total)

    if warm_start:
        add_cuts(solve_deterministic(inst, backend=backend).schedule.u)
    status = "iteration_limit"
    for it in range(1, max_iters + 1):
        # the lower bound is the master's proven bound, so a partial master solve is safe
        sol = solve_milp(master, gap=max(0.1 * gap, MASTER_GAP), backend=backend)
        if sol.x is None:
            raise InternalError(f"Benders master ended {sol.status.value}")
        lower = max(lower, float(sol.bound))
        u = commit.values(sol.x)
        add_cuts(u)
        log.append({"iter": it, "lower": lower, "upper": upper, "n_cuts": n_cuts})
        if upper - lower <= gap * max(abs(upper), 1e-9):
            status = "optimal"
            break
    sched = _uniform(case, inst.prior, best_u)
    out = StochasticSolution(sched, np.full(n, sched.commitment_cost(case)), best_rec, lower, log,
                             status)
    if status != "optimal":
        raise IterationLimit(f"Benders stopped after {max_iters} iterations with bounds "
                             f"[{lower:.6g}, {upper:.6g}]", solution=out)
    return out


# ---------------------------------------------------------------------------
# benchmarks

def solve_perfect_information(inst: TsspInstance, gap: float = 1e-9,
                              backend: str = "auto") -> StochasticSolution:
    """Each scenario recommitted with full knowledge of its own outcome."""
    scheds, cc, rec = [], [], []
    for fc in inst.scenarios:
        res = solve_frac(inst.case, inst.prior, fc, inst.loss_model, inst.penalties, gap=gap,
                         backend=backend)
        c = res.schedule.commitment_cost(inst.case)
        scheds.append(res.schedule)
        cc.append(c)
        rec.append(res.objective - c)
    return StochasticSolution(None, np.array(cc), np.array(rec), schedules=scheds)


def solve_deterministic(inst: TsspInstance, gap: float = 1e-9,
                        backend: str = "auto") -> StochasticSolution:
    """FRAC on the mean scenario, then priced out in every scenario."""
    res = solve_frac(inst.case, inst.prior, inst.mean_forecast(), inst.loss_model,
                     inst.penalties, gap=gap, backend=backend)
    return evaluate_schedule(inst, res.schedule, backend)
