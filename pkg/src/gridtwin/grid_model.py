"""Grid data model, case-file I/O and DC network sensitivities.

Reactance and resistance are per-unit on a 100 MVA base; flows, injections,
limits and losses are MW. PTDF entries are dimensionless (MW/MW).
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np
import scipy.linalg as sla

from gridtwin.errors import ParseError, SingularNetwork, ValidationError

BASE_MVA = 100.0
PIVOT_FLOOR = 1e-12

BusId = Union[int, str]


@dataclass(frozen=True)
class Bus:
    id: BusId
    load_weight: float = 0.0


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: BusId
    to_bus: BusId
    reactance: float
    resistance: float
    flow_limit: float


@dataclass(frozen=True)
class Generator:
    id: str
    bus: BusId
    pmin: float
    pmax: float
    ramp_rate: float
    min_up: int
    min_down: int
    startup_cost: float
    no_load_cost: float
    cost_curve: tuple[tuple[float, float], ...]
    notification_time: float
    initial_status: int
    initial_output: float

    @property
    def initially_on(self) -> bool:
        return self.initial_status > 0

    @property
    def first_price(self) -> float:
        return self.cost_curve[0][1]


@dataclass(frozen=True)
class Renewable:
    id: str
    bus: BusId


@dataclass(frozen=True, eq=False)
class Case:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    reference_bus: BusId
    reserve_requirement: float = 0.0
    renewables: tuple[Renewable, ...] = ()

    def __eq__(self, other):
        if not isinstance(other, Case):
            return NotImplemented
        return case_to_dict(self) == case_to_dict(other)

    def __hash__(self):
        return hash(json.dumps(case_to_dict(self), sort_keys=True))

    @cached_property
    def bus_index(self) -> dict:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def ref_index(self) -> int:
        return self.bus_index[self.reference_bus]

    @cached_property
    def gen_bus(self) -> np.ndarray:
        return np.array([self.bus_index[g.bus] for g in self.generators], dtype=np.int64)

    @cached_property
    def ren_bus(self) -> np.ndarray:
        return np.array([self.bus_index[r.bus] for r in self.renewables], dtype=np.int64)

    @cached_property
    def load_shares(self) -> np.ndarray:
        w = np.array([b.load_weight for b in self.buses], dtype=float)
        total = w.sum()
        if total <= 0:
            out = np.zeros(len(w))
            out[self.ref_index] = 1.0
            return out
        return w / total

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_gens(self) -> int:
        return len(self.generators)

    @cached_property
    def ptdf(self) -> "Ptdf":
        return compute_ptdf(self)

    def bus_loads(self, system_load: float) -> np.ndarray:
        return self.load_shares * system_load

    def injections(self, dispatch, system_load: float, renewables=None) -> np.ndarray:
        """Net MW injection per bus."""
        inj = np.zeros(self.n_buses)
        np.add.at(inj, self.gen_bus, np.asarray(dispatch, dtype=float))
        if renewables is not None and len(self.renewables):
            np.add.at(inj, self.ren_bus, np.asarray(renewables, dtype=float))
        return inj - self.bus_loads(system_load)


@dataclass(frozen=True)
class Ptdf:
    matrix: np.ndarray  # lines x buses
    line_ids: tuple = field(default=())
    bus_ids: tuple = field(default=())

    def flows(self, injections) -> np.ndarray:
        return self.matrix @ np.asarray(injections, dtype=float)


@dataclass(frozen=True)
class LossModel:
    base_losses: float
    loss_factors: np.ndarray  # d losses / d injection, per bus
    base_injections: np.ndarray

    def losses(self, injections) -> float:
        """Linearized losses at ``injections``."""
        return float(self.base_losses + self.loss_factors @ (np.asarray(injections) - self.base_injections))

    @classmethod
    def lossless(cls, n_buses: int) -> "LossModel":
        return cls(0.0, np.zeros(n_buses), np.zeros(n_buses))


# ---------------------------------------------------------------------------
# validation and I/O

_TOP_KEYS = {"buses", "lines", "generators", "reference_bus", "reserve_requirement", "renewables"}
_REQUIRED_TOP = {"buses", "lines", "generators", "reference_bus", "reserve_requirement"}
_BUS_KEYS = {"id", "load_weight"}
_LINE_KEYS = {"id", "from_bus", "to_bus", "reactance", "resistance", "flow_limit"}
_GEN_KEYS = {
    "id", "bus", "pmin", "pmax", "ramp_rate", "min_up", "min_down", "startup_cost",
    "no_load_cost", "cost_curve", "notification_time", "initial_status", "initial_output",
}
_REN_KEYS = {"id", "bus"}


def _check_keys(obj, allowed, required, what):
    if not isinstance(obj, dict):
        raise ParseError(f"{what}: expected a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise ParseError(f"{what}: unknown keys {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ParseError(f"{what}: missing keys {sorted(missing)}")


def _num(obj, key, what, integer=False):
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{what}: field {key!r} must be a number")
    if integer:
        if float(v) != int(v):
            raise ParseError(f"{what}: field {key!r} must be an integer")
        return int(v)
    if not math.isfinite(v):
        raise ParseError(f"{what}: field {key!r} must be finite")
    return float(v)


def _bus_id(v, what):
    if isinstance(v, bool) or not isinstance(v, (int, str)):
        raise ParseError(f"{what}: bus ids must be integers or strings")
    return v


def case_from_dict(data: dict) -> Case:
    _check_keys(data, _TOP_KEYS, _REQUIRED_TOP, "case")
    for key in ("buses", "lines", "generators"):
        if not isinstance(data[key], list):
            raise ParseError(f"case: {key!r} must be a list")
    buses = []
    for k, b in enumerate(data["buses"]):
        _check_keys(b, _BUS_KEYS, {"id"}, f"bus #{k}")
        buses.append(Bus(_bus_id(b["id"], f"bus #{k}"),
                         _num(b, "load_weight", f"bus {b['id']}") if "load_weight" in b else 0.0))
    lines = []
    for k, ln in enumerate(data["lines"]):
        _check_keys(ln, _LINE_KEYS, _LINE_KEYS - {"id", "resistance"}, f"line #{k}")
        what = f"line {ln.get('id', k + 1)}"
        lines.append(Line(
            id=str(ln.get("id", f"L{k + 1}")),
            from_bus=_bus_id(ln["from_bus"], what),
            to_bus=_bus_id(ln["to_bus"], what),
            reactance=_num(ln, "reactance", what),
            resistance=_num(ln, "resistance", what) if "resistance" in ln else 0.0,
            flow_limit=_num(ln, "flow_limit", what),
        ))
    gens = []
    for k, g in enumerate(data["generators"]):
        _check_keys(g, _GEN_KEYS, _GEN_KEYS, f"generator #{k}")
        what = f"generator {g['id']}"
        curve = g["cost_curve"]
        if not isinstance(curve, list) or not all(
            isinstance(seg, (list, tuple)) and len(seg) == 2 for seg in curve
        ):
            raise ParseError(f"{what}: cost_curve must be a list of [length, price] pairs")
        try:
            curve_t = tuple((float(a), float(p)) for a, p in curve)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{what}: cost_curve entries must be numbers") from exc
        gens.append(Generator(
            id=str(g["id"]),
            bus=_bus_id(g["bus"], what),
            pmin=_num(g, "pmin", what),
            pmax=_num(g, "pmax", what),
            ramp_rate=_num(g, "ramp_rate", what),
            min_up=_num(g, "min_up", what, integer=True),
            min_down=_num(g, "min_down", what, integer=True),
            startup_cost=_num(g, "startup_cost", what),
            no_load_cost=_num(g, "no_load_cost", what),
            cost_curve=curve_t,
            notification_time=_num(g, "notification_time", what),
            initial_status=_num(g, "initial_status", what, integer=True),
            initial_output=_num(g, "initial_output", what),
        ))
    rens = []
    for k, r in enumerate(data.get("renewables", [])):
        _check_keys(r, _REN_KEYS, _REN_KEYS, f"renewable #{k}")
        rens.append(Renewable(str(r["id"]), _bus_id(r["bus"], f"renewable {r['id']}")))
    case = Case(
        buses=tuple(buses),
        lines=tuple(lines),
        generators=tuple(gens),
        reference_bus=_bus_id(data["reference_bus"], "case"),
        reserve_requirement=_num(data, "reserve_requirement", "case"),
        renewables=tuple(rens),
    )
    validate_case(case)
    return case


def validate_case(case: Case) -> None:
    """Raise :class:`ValidationError` naming the first offending entity."""
    ids = [b.id for b in case.buses]
    if not ids:
        raise ValidationError("case has no buses")
    seen = set()
    for b in ids:
        if b in seen:
            raise ValidationError(f"duplicate bus {b}")
        seen.add(b)
    for b in case.buses:
        if b.load_weight < 0:
            raise ValidationError(f"bus {b.id}: load_weight must be >= 0")
    if case.reference_bus not in seen:
        raise ValidationError(f"reference bus {case.reference_bus} is not a declared bus")
    if not 0.0 <= case.reserve_requirement <= 1.0:
        raise ValidationError("reserve_requirement must lie in [0, 1]")
    line_ids = set()
    for ln in case.lines:
        if ln.id in line_ids:
            raise ValidationError(f"duplicate line {ln.id}")
        line_ids.add(ln.id)
        for end in (ln.from_bus, ln.to_bus):
            if end not in seen:
                raise ValidationError(f"line {ln.id} references undeclared bus {end}")
        if ln.from_bus == ln.to_bus:
            raise ValidationError(f"line {ln.id} connects bus {ln.from_bus} to itself")
        if not ln.reactance > 0:
            raise ValidationError(f"line {ln.id}: reactance must be > 0")
        if ln.resistance < 0:
            raise ValidationError(f"line {ln.id}: resistance must be >= 0")
        if not ln.flow_limit > 0:
            raise ValidationError(f"line {ln.id}: flow_limit must be > 0")
    gen_ids = set()
    for g in case.generators:
        if g.id in gen_ids:
            raise ValidationError(f"duplicate generator {g.id}")
        gen_ids.add(g.id)
        if g.bus not in seen:
            raise ValidationError(f"generator {g.id} references undeclared bus {g.bus}")
        if not 0 <= g.pmin <= g.pmax:
            raise ValidationError(f"generator {g.id}: need 0 <= pmin <= pmax")
        if not g.ramp_rate > 0:
            raise ValidationError(f"generator {g.id}: ramp_rate must be > 0")
        if g.min_up < 1 or g.min_down < 1:
            raise ValidationError(f"generator {g.id}: min_up/min_down must be >= 1 hour")
        if g.startup_cost < 0 or g.no_load_cost < 0 or g.notification_time < 0:
            raise ValidationError(f"generator {g.id}: costs and notification_time must be >= 0")
        if not g.cost_curve:
            raise ValidationError(f"generator {g.id}: cost_curve needs at least one segment")
        lengths = [a for a, _ in g.cost_curve]
        prices = [p for _, p in g.cost_curve]
        if any(a < 0 for a in lengths):
            raise ValidationError(f"generator {g.id}: negative segment length")
        if not math.isclose(sum(lengths), g.pmax - g.pmin, rel_tol=1e-9, abs_tol=1e-6):
            raise ValidationError(
                f"generator {g.id}: cost segments sum to {sum(lengths)} but pmax - pmin = {g.pmax - g.pmin}"
            )
        if any(b < a for a, b in zip(prices, prices[1:])):
            raise ValidationError(f"generator {g.id}: nonconvex cost curve (prices must be nondecreasing)")
        if g.initial_status == 0:
            raise ValidationError(f"generator {g.id}: initial_status must be nonzero")
        if g.initial_status > 0:
            if not g.pmin - 1e-9 <= g.initial_output <= g.pmax + 1e-9:
                raise ValidationError(f"generator {g.id}: initial_output outside [pmin, pmax]")
        elif g.initial_output != 0:
            raise ValidationError(f"generator {g.id}: initial_output must be 0 when off")
    ren_ids = set()
    for r in case.renewables:
        if r.id in ren_ids:
            raise ValidationError(f"duplicate renewable {r.id}")
        ren_ids.add(r.id)
        if r.bus not in seen:
            raise ValidationError(f"renewable {r.id} references undeclared bus {r.bus}")
    # connectivity
    adj = {b: [] for b in ids}
    for ln in case.lines:
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    reached = {case.reference_bus}
    todo = deque([case.reference_bus])
    while todo:
        u = todo.popleft()
        for v in adj[u]:
            if v not in reached:
                reached.add(v)
                todo.append(v)
    if len(reached) != len(ids):
        missing = [b for b in ids if b not in reached]
        raise ValidationError(f"network is disconnected: bus {missing[0]} unreachable from reference")


def case_to_dict(case: Case) -> dict:
    out = {
        "buses": [asdict(b) for b in case.buses],
        "lines": [asdict(ln) for ln in case.lines],
        "generators": [],
        "reference_bus": case.reference_bus,
        "reserve_requirement": case.reserve_requirement,
    }
    for g in case.generators:
        d = asdict(g)
        d["cost_curve"] = [list(seg) for seg in g.cost_curve]
        out["generators"].append(d)
    if case.renewables:
        out["renewables"] = [asdict(r) for r in case.renewables]
    return out


def serialize_case(case: Case) -> str:
    return json.dumps(case_to_dict(case), indent=2)


def load_case(path) -> Case:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read case file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    return case_from_dict(data)


def save_case(case: Case, path) -> None:
    Path(path).write_text(serialize_case(case) + "\n")


# ---------------------------------------------------------------------------
# network sensitivities

def susceptance_matrices(case: Case) -> tuple[np.ndarray, np.ndarray]:
    """Bus susceptance matrix (n x n) and branch-bus flow matrix (l x n)."""
    n, nl = case.n_buses, case.n_lines
    Bbus = np.zeros((n, n))
    Bf = np.zeros((nl, n))
    for k, ln in enumerate(case.lines):
        if ln.reactance == 0:
            raise SingularNetwork(f"line {ln.id} has zero reactance")
        b = 1.0 / ln.reactance
        i, j = case.bus_index[ln.from_bus], case.bus_index[ln.to_bus]
        Bbus[i, i] += b
        Bbus[j, j] += b
        Bbus[i, j] -= b
        Bbus[j, i] -= b
        Bf[k, i] = b
        Bf[k, j] = -b
    return Bbus, Bf


def compute_ptdf(case: Case) -> Ptdf:
    n = case.n_buses
    ref = case.ref_index
    Bbus, Bf = susceptance_matrices(case)
    keep = np.array([i for i in range(n) if i != ref], dtype=np.int64)
    mat = np.zeros((case.n_lines, n))
    if len(keep):
        Bred = Bbus[np.ix_(keep, keep)]
        lu, piv = sla.lu_factor(Bred, check_finite=False)
        udiag = np.abs(np.diag(lu))
        if udiag.min() < PIVOT_FLOOR:
            raise SingularNetwork("susceptance matrix is numerically singular")
        # theta = Bred^-1 P on non-reference buses; flow = Bf theta
        X = sla.lu_solve((lu, piv), np.eye(len(keep)), check_finite=False)
        mat[:, keep] = Bf[:, keep] @ X
    mat[:, ref] = 0.0
    return Ptdf(mat, tuple(ln.id for ln in case.lines), tuple(b.id for b in case.buses))


def line_losses(case: Case, flows) -> np.ndarray:
    """Per-line r * f^2 losses in MW for MW flows ``flows``."""
    r = np.array([ln.resistance for ln in case.lines])
    f = np.asarray(flows, dtype=float)
    return r * f * f / BASE_MVA


def compute_loss_model(case: Case, base_dispatch, base_loads=None, base_renewables=None,
                       balance_tol: float = 0.05) -> LossModel:
    """Linearize DC losses around a base operating point.

    With ``base_loads`` omitted, the system load is taken equal to total
    generation (distributed by the buses' load weights), which balances the
    base point by construction. ``base_loads`` may be a system total or a
    per-bus vector.
    """
    base_dispatch = np.asarray(base_dispatch, dtype=float)
    if base_dispatch.shape != (case.n_gens,):
        raise ValueError("base_dispatch must have one entry per generator")
    for g, p in zip(case.generators, base_dispatch):
        if p < -1e-9 or p > g.pmax + 1e-9:
            raise ValueError(f"base dispatch of generator {g.id} outside its bounds")
    inj = np.zeros(case.n_buses)
    np.add.at(inj, case.gen_bus, base_dispatch)
    if base_renewables is not None and len(case.renewables):
        np.add.at(inj, case.ren_bus, np.asarray(base_renewables, dtype=float))
    if base_loads is None:
        loads = case.load_shares * inj.sum()
    else:
        loads = np.asarray(base_loads, dtype=float)
        loads = case.load_shares * float(loads) if loads.ndim == 0 else loads
    inj = inj - loads
    ptdf = case.ptdf.matrix
    flows = ptdf @ inj
    r = np.array([ln.resistance for ln in case.lines])
    base_losses = float(np.sum(r * flows ** 2) / BASE_MVA)
    mismatch = inj.sum() - base_losses
    scale = max(1.0, float(np.abs(loads).sum()))
    if base_loads is not None and abs(mismatch) > balance_tol * scale + 1e-6:
        raise ValueError(
            f"base point does not balance: injections - losses = {mismatch:.6g} MW"
        )
    lf = 2.0 * (r * flows) @ ptdf / BASE_MVA
    lf[case.ref_index] = 0.0
    return LossModel(base_losses, lf, inj)
