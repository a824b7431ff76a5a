"""Building blocks shared by the dispatch and commitment models.

A model is assembled from one commitment block (on/off status per generator
and commitment period, either constants or u/v/w variables) and one or more
dispatch blocks (per-step generation, reserve, renewables, network rows and
violation slacks). SCED and LAD use constant commitments; SCUC, FRAC, LAC and
the stochastic extensive form use variables.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gridtwin.errors import InconsistentCommitment, InfeasibleFixing
from gridtwin.grid_model import Case, LossModel
from gridtwin.opt_core import INF, LinearProgram, MixedIntegerProgram

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class Penalties:
    """Violation prices in $/MWh."""

    transmission: float = 1000.0
    balance: float = 3500.0
    reserve: float = 850.0

    def to_dict(self) -> dict:
        return {"transmission": self.transmission, "balance": self.balance, "reserve": self.reserve}


@dataclass(frozen=True)
class Step:
    """One dispatch step: system load, renewable availability, owning commitment period."""

    load: float
    renewables: np.ndarray
    block: int
    block_start: bool
    hours: float  # duration, also the objective weight for $/h terms


# ---------------------------------------------------------------------------
# commitment

def commitment_feasible(min_up: int, min_down: int, init_status: int, allowed) -> bool:
    """Whether some on/off path through ``allowed`` (per-period sets of {0, 1})
    respects minimum up and down times given the initial status in hours."""
    cap = max(min_up, min_down, 1)
    states = {(init_status > 0, min(abs(init_status), cap))}
    for opts in allowed:
        nxt = set()
        for on, dur in states:
            for val in opts:
                val = bool(val)
                if val == on:
                    nxt.add((on, min(dur + 1, cap)))
                elif on and dur >= min_up:
                    nxt.add((False, 1))
                elif not on and dur >= min_down:
                    nxt.add((True, 1))
        if not nxt:
            return False
        states = nxt
    return True


def allowed_values(fixed_row, floor_row, n):
    out = []
    for t in range(n):
        if fixed_row is not None and fixed_row[t] >= 0:
            out.append({int(fixed_row[t])})
        elif floor_row is not None and floor_row[t] >= 1:
            out.append({1})
        else:
            out.append({0, 1})
    return out


@dataclass
class CommitmentBlock:
    """u/v/w handles per generator and period; index -1 means constant."""

    u_idx: np.ndarray
    v_idx: np.ndarray
    w_idx: np.ndarray
    u_val: np.ndarray
    v_val: np.ndarray
    w_val: np.ndarray
    init_on: np.ndarray

    @property
    def n_periods(self) -> int:
        return self.u_idx.shape[1]

    @classmethod
    def constant(cls, u, init_on) -> "CommitmentBlock":
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        init_on = np.asarray(init_on, dtype=bool)
        prev = np.column_stack([init_on.astype(float), u[:, :-1]])
        minus = -np.ones(u.shape, dtype=np.int64)
        return cls(minus, minus.copy(), minus.copy(), u,
                   np.maximum(u - prev, 0.0), np.maximum(prev - u, 0.0), init_on)

    def u_term(self, coeffs: dict, g: int, b: int, coef: float) -> float:
        return _term(coeffs, self.u_idx[g, b], self.u_val[g, b], coef)

    def v_term(self, coeffs: dict, g: int, b: int, coef: float) -> float:
        return _term(coeffs, self.v_idx[g, b], self.v_val[g, b], coef)

    def w_term(self, coeffs: dict, g: int, b: int, coef: float) -> float:
        return _term(coeffs, self.w_idx[g, b], self.w_val[g, b], coef)

    def is_off(self, g: int, b: int) -> bool:
        return self.u_idx[g, b] < 0 and self.u_val[g, b] == 0.0

    def is_on(self, g: int, b: int) -> bool:
        return self.u_idx[g, b] < 0 and self.u_val[g, b] == 1.0

    def values(self, x) -> np.ndarray:
        """Commitment matrix from a primal vector (constants pass through)."""
        out = self.u_val.copy()
        var = self.u_idx >= 0
        out[var] = np.round(np.asarray(x)[self.u_idx[var]])
        return out.astype(np.int8)


def _term(coeffs, j, const, coef):
    if j >= 0:
        coeffs[int(j)] = coeffs.get(int(j), 0.0) + coef
        return 0.0
    return coef * const


def add_commitment_block(prog: MixedIntegerProgram, case: Case, n_periods: int, init_status,
                         fixed=None, floor=None, period_hours=None, startup_free=None,
                         tag: str = "") -> CommitmentBlock:
    """Add u (binary), v (binary startup) and w (shutdown) variables.

    ``fixed`` is a gens x periods array with -1 for free entries; ``floor``
    lower-bounds u (add-only recommitment). ``period_hours`` weights the
    no-load cost; ``startup_free`` marks periods whose startup was already
    incurred. Raises :class:`InfeasibleFixing` when the pinned values cannot
    meet minimum up/down times.
    """
    G = case.n_gens
    init_status = np.asarray(init_status, dtype=np.int64)
    hours = np.ones(n_periods) if period_hours is None else np.asarray(period_hours, dtype=float)
    fixed = None if fixed is None else np.asarray(fixed, dtype=np.int64)
    floor = None if floor is None else np.asarray(floor, dtype=np.int64)
    u_idx = np.empty((G, n_periods), dtype=np.int64)
    v_idx = np.empty_like(u_idx)
    w_idx = np.empty_like(u_idx)
    for g, gen in enumerate(case.generators):
        allowed = allowed_values(None if fixed is None else fixed[g],
                                 None if floor is None else floor[g], n_periods)
        if not commitment_feasible(gen.min_up, gen.min_down, int(init_status[g]), allowed):
            raise InfeasibleFixing(
                f"generator {gen.id}: pinned commitments violate min_up={gen.min_up}/"
                f"min_down={gen.min_down} given initial status {int(init_status[g])}")
        # initial-condition pins
        s = int(init_status[g])
        forced_on = max(0, gen.min_up - s) if s > 0 else 0
        forced_off = max(0, gen.min_down + s) if s < 0 else 0
        for t in range(n_periods):
            opts = allowed[t]
            lo, hi = min(opts), max(opts)
            if t < forced_on:
                lo = 1
            if t < forced_off:
                hi = 0
            nl = float(gen.no_load_cost * hours[t])
            u_idx[g, t] = prog.add_var(f"u[{gen.id},{t}]{tag}", lo, hi, nl, integer=True)
            su = 0.0 if startup_free is not None and startup_free[t] else gen.startup_cost
            v_idx[g, t] = prog.add_var(f"v[{gen.id},{t}]{tag}", 0.0, 1.0, su, integer=True)
            w_idx[g, t] = prog.add_var(f"w[{gen.id},{t}]{tag}", 0.0, 1.0, 0.0)
        prev_on = 1.0 if s > 0 else 0.0
        for t in range(n_periods):
            row = {u_idx[g, t]: 1.0, v_idx[g, t]: -1.0, w_idx[g, t]: 1.0}
            rhs = prev_on if t == 0 else 0.0
            if t > 0:
                row[u_idx[g, t - 1]] = -1.0
            prog.add_constraint(row, "=", rhs, name=f"link[{gen.id},{t}]{tag}")
            prog.add_constraint({v_idx[g, t]: 1.0, w_idx[g, t]: 1.0}, "<=", 1.0,
                                name=f"onoff[{gen.id},{t}]{tag}")
        if gen.min_up > 1:
            for t in range(n_periods):
                row = {v_idx[g, k]: 1.0 for k in range(max(0, t - gen.min_up + 1), t + 1)}
                row[u_idx[g, t]] = row.get(u_idx[g, t], 0.0) - 1.0
                prog.add_constraint(row, "<=", 0.0, name=f"minup[{gen.id},{t}]{tag}")
        if gen.min_down > 1:
            for t in range(n_periods):
                row = {w_idx[g, k]: 1.0 for k in range(max(0, t - gen.min_down + 1), t + 1)}
                row[u_idx[g, t]] = 1.0
                prog.add_constraint(row, "<=", 1.0, name=f"mindown[{gen.id},{t}]{tag}")
    nan = np.full((G, n_periods), np.nan)
    return CommitmentBlock(u_idx, v_idx, w_idx, nan, nan.copy(), nan.copy(), init_status > 0)


def fixed_commitment_block(prog: LinearProgram, block: CommitmentBlock, u, tag: str = "fix"):
    """Copy of ``block`` whose u/v/w are fresh continuous variables fixed by bounds
    at the values implied by ``u``. Reduced costs of these variables are the
    subgradient of the dispatch cost with respect to the commitment."""
    const = CommitmentBlock.constant(u, block.init_on)
    G, T = const.u_val.shape
    idx = {}
    for name, vals in (("u", const.u_val), ("v", const.v_val), ("w", const.w_val)):
        arr = np.empty((G, T), dtype=np.int64)
        for g in range(G):
            for t in range(T):
                arr[g, t] = prog.add_var(f"{name}{tag}[{g},{t}]", vals[g, t], vals[g, t])
        idx[name] = arr
    nan = np.full((G, T), np.nan)
    return CommitmentBlock(idx["u"], idx["v"], idx["w"], nan, nan.copy(), nan.copy(),
                           const.init_on), const


# ---------------------------------------------------------------------------
# dispatch

@dataclass
class DispatchBlock:
    steps: list
    p_idx: np.ndarray          # gens x steps, -1 when the unit is off (p = 0)
    r_idx: np.ndarray          # gens x steps, -1 when no reserve variable
    ren_idx: np.ndarray        # renewables x steps
    short_idx: np.ndarray      # steps
    surplus_idx: np.ndarray
    res_short_idx: np.ndarray  # -1 when no requirement
    flow_idx: np.ndarray       # lines x steps
    over_idx: np.ndarray
    under_idx: np.ndarray
    balance_row: np.ndarray
    line_row: np.ndarray
    reserve_row: np.ndarray
    loss_factors: np.ndarray
    penalties: Penalties
    bus_loads: np.ndarray = field(repr=False, default=None)  # steps x buses

    def values(self, x, idx) -> np.ndarray:
        x = np.asarray(x)
        out = np.zeros(idx.shape)
        mask = idx >= 0
        out[mask] = x[idx[mask]]
        return out


def add_dispatch_block(prog: LinearProgram, case: Case, steps, commit: CommitmentBlock,
                       init_output, penalties: Penalties | None = None,
                       loss_model: LossModel | None = None, tag: str = "",
                       scale: float = 1.0) -> DispatchBlock:
    """Add per-step dispatch variables and rows.

    Objective terms are $/h prices times ``step.hours`` times ``scale``
    (scale = scenario probability in the extensive form).
    """
    pen = penalties or Penalties()
    G, B, L, R = case.n_gens, case.n_buses, case.n_lines, len(case.renewables)
    S = len(steps)
    init_output = np.asarray(init_output, dtype=float)
    lm = loss_model or LossModel.lossless(B)
    lf = np.asarray(lm.loss_factors, dtype=float)
    ptdf = case.ptdf.matrix if L else np.zeros((0, B))
    shares = case.load_shares
    gbus, rbus = case.gen_bus, case.ren_bus
    req = case.reserve_requirement

    p_idx = -np.ones((G, S), dtype=np.int64)
    r_idx = -np.ones((G, S), dtype=np.int64)
    ren_idx = -np.ones((R, S), dtype=np.int64)
    short_idx = np.empty(S, dtype=np.int64)
    surplus_idx = np.empty(S, dtype=np.int64)
    res_short_idx = -np.ones(S, dtype=np.int64)
    flow_idx = np.empty((L, S), dtype=np.int64)
    over_idx = np.empty((L, S), dtype=np.int64)
    under_idx = np.empty((L, S), dtype=np.int64)
    balance_row = np.empty(S, dtype=np.int64)
    line_row = np.empty((L, S), dtype=np.int64)
    reserve_row = -np.ones(S, dtype=np.int64)
    bus_loads = np.zeros((S, B))

    def const_cost(amount):
        prog.objective_constant += amount

    for s, st in enumerate(steps):
        w = st.hours * scale
        b = st.block
        sfx = f"{s}]{tag}"
        # generation, segments and reserve
        for g, gen in enumerate(case.generators):
            if commit.is_off(g, b):
                continue
            on_const = commit.is_on(g, b)
            segs = gen.cost_curve
            lo = gen.pmin if on_const else 0.0
            single = len(segs) == 1
            p = prog.add_var(f"p[{gen.id},{sfx}", lo, gen.pmax, segs[0][1] * w if single else 0.0)
            p_idx[g, s] = p
            if not single:
                row = {p: 1.0}
                for k, (length, price) in enumerate(segs):
                    row[prog.add_var(f"seg[{gen.id},{k},{sfx}", 0.0, length, price * w)] = -1.0
                c = commit.u_term(row, g, b, -gen.pmin)
                prog.add_constraint(row, "=", -c, name=f"segsum[{gen.id},{sfx}")
                tmp: dict = {}
                c = commit.u_term(tmp, g, b, gen.pmin * segs[0][1] * w)
                for j, v in tmp.items():
                    prog.add_cost(j, v)
                const_cost(c)
            elif not on_const:
                row = {p: 1.0}
                c = commit.u_term(row, g, b, -gen.pmin)
                if gen.pmin > 0:
                    prog.add_constraint(row, ">=", -c, name=f"pmin[{gen.id},{sfx}")
            cap = min(10.0 * gen.ramp_rate, gen.pmax - gen.pmin)
            r = -1
            if req > 0 and cap > 0:
                r = prog.add_var(f"r[{gen.id},{sfx}", 0.0, cap)
                r_idx[g, s] = r
                if not on_const:
                    row = {r: 1.0}
                    c = commit.u_term(row, g, b, -cap)
                    prog.add_constraint(row, "<=", -c, name=f"rcap[{gen.id},{sfx}")
            if r >= 0 or not on_const:
                row = {p: 1.0}
                if r >= 0:
                    row[r] = 1.0
                c = commit.u_term(row, g, b, -gen.pmax)
                prog.add_constraint(row, "<=", -c, name=f"pmax[{gen.id},{sfx}")
        for k, ren in enumerate(case.renewables):
            avail = float(st.renewables[k]) if len(st.renewables) else 0.0
            if avail > 0:
                ren_idx[k, s] = prog.add_var(f"ren[{ren.id},{sfx}", 0.0, avail)
        short_idx[s] = prog.add_var(f"short[{sfx}", 0.0, INF, pen.balance * w)
        surplus_idx[s] = prog.add_var(f"surplus[{sfx}", 0.0, INF, pen.balance * w)

        # energy balance with linearized losses
        d = shares * st.load
        bus_loads[s] = d
        row = {short_idx[s]: 1.0, surplus_idx[s]: -1.0}
        for g in range(G):
            if p_idx[g, s] >= 0:
                row[p_idx[g, s]] = 1.0 - lf[gbus[g]]
        for k in range(R):
            if ren_idx[k, s] >= 0:
                row[ren_idx[k, s]] = 1.0 - lf[rbus[k]]
        rhs = float((1.0 - lf) @ d + lm.base_losses - lf @ lm.base_injections)
        balance_row[s] = prog.add_constraint(row, "=", rhs, name=f"balance[{sfx}")

        # network
        for l, line in enumerate(case.lines):
            f = prog.add_var(f"flow[{line.id},{sfx}", -line.flow_limit, line.flow_limit)
            o = prog.add_var(f"over[{line.id},{sfx}", 0.0, INF, pen.transmission * w)
            u = prog.add_var(f"under[{line.id},{sfx}", 0.0, INF, pen.transmission * w)
            flow_idx[l, s], over_idx[l, s], under_idx[l, s] = f, o, u
            row = {f: -1.0, o: -1.0, u: 1.0}
            for g in range(G):
                if p_idx[g, s] >= 0 and ptdf[l, gbus[g]] != 0.0:
                    row[p_idx[g, s]] = ptdf[l, gbus[g]]
            for k in range(R):
                if ren_idx[k, s] >= 0 and ptdf[l, rbus[k]] != 0.0:
                    row[ren_idx[k, s]] = ptdf[l, rbus[k]]
            line_row[l, s] = prog.add_constraint(row, "=", float(ptdf[l] @ d),
                                                 name=f"line[{line.id},{sfx}")

        # spinning reserve
        if req > 0:
            rs = prog.add_var(f"resshort[{sfx}", 0.0, INF, pen.reserve * w)
            res_short_idx[s] = rs
            row = {rs: 1.0}
            for g in range(G):
                if r_idx[g, s] >= 0:
                    row[r_idx[g, s]] = 1.0
            reserve_row[s] = prog.add_constraint(row, ">=", req * st.load, name=f"reserve[{sfx}")

    _add_ramps(prog, case, steps, commit, init_output, p_idx, tag)
    return DispatchBlock(steps, p_idx, r_idx, ren_idx, short_idx, surplus_idx, res_short_idx,
                         flow_idx, over_idx, under_idx, balance_row, line_row, reserve_row, lf,
                         pen, bus_loads)


def _add_ramps(prog, case, steps, commit, init_output, p_idx, tag):
    for g, gen in enumerate(case.generators):
        for s, st in enumerate(steps):
            ramp = 60.0 * st.hours * gen.ramp_rate
            if ramp >= gen.pmax:
                continue
            su = max(gen.pmin, ramp)
            b = st.block
            # ramp up: p_s - p_prev <= ramp * u_prev + su * v_s
            up: dict = {}
            down: dict = {}
            c_up = c_down = 0.0
            if p_idx[g, s] >= 0:
                up[int(p_idx[g, s])] = 1.0
                down[int(p_idx[g, s])] = -1.0
            if s == 0:
                c_up -= init_output[g]
                c_down += init_output[g]
                c_up -= ramp * float(commit.init_on[g])
            else:
                if p_idx[g, s - 1] >= 0:
                    up[int(p_idx[g, s - 1])] = up.get(int(p_idx[g, s - 1]), 0.0) - 1.0
                    down[int(p_idx[g, s - 1])] = down.get(int(p_idx[g, s - 1]), 0.0) + 1.0
                c_up += commit.u_term(up, g, steps[s - 1].block, -ramp)
            if st.block_start:
                c_up += commit.v_term(up, g, b, -su)
                c_down += commit.w_term(down, g, b, -gen.pmax)
            c_down += commit.u_term(down, g, b, -ramp)
            _row_or_bound(prog, up, -c_up, f"rampup[{gen.id},{s}]{tag}", gen.id)
            _row_or_bound(prog, down, -c_down, f"rampdown[{gen.id},{s}]{tag}", gen.id)


def _row_or_bound(prog, coeffs, rhs, name, gen_id):
    """Add ``coeffs . x <= rhs``; single-variable rows become bounds."""
    coeffs = {j: v for j, v in coeffs.items() if v != 0.0}
    if not coeffs:
        if rhs < -FEAS_TOL:
            raise InconsistentCommitment(f"generator {gen_id}: ramp limit cannot be met ({name})")
        return
    if len(coeffs) == 1:
        (j, a), = coeffs.items()
        lb, ub = prog._lb[j], prog._ub[j]
        if a > 0:
            ub = min(ub, rhs / a)
        else:
            lb = max(lb, rhs / a)
        if lb > ub:
            if lb - ub > 1e-7:
                raise InconsistentCommitment(
                    f"generator {gen_id}: committed output range is empty under ramp limits ({name})")
            lb = ub
        prog.set_bounds(j, lb, ub)
        return
    prog.add_constraint(coeffs, "<=", rhs, name=name)
