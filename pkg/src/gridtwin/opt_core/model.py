"""Problem containers for linear and mixed-integer programs."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

INF = math.inf


class Relation(str, enum.Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    TIME_LIMIT = "TimeLimit"


_REL = {"<=": Relation.LE, "=": Relation.EQ, "==": Relation.EQ, ">=": Relation.GE}


class LinearProgram:
    """Minimization LP with bounded variables and sparse rows.

    Variables and constraints are addressed by integer index; names are kept
    for reporting and for the LP text dump. ``meta`` is a free dict that model
    builders use to remember which index means what.
    """

    def __init__(self, name: str = "lp"):
        self.name = name
        self.var_names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._cost: list[float] = []
        self._index: dict[str, int] = {}
        self.row_names: list[str] = []
        self._row_idx: list[np.ndarray] = []
        self._row_val: list[np.ndarray] = []
        self.relations: list[Relation] = []
        self._rhs: list[float] = []
        self.objective_constant = 0.0
        self.meta: dict = {}

    # -- variables -------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_cons(self) -> int:
        return len(self.row_names)

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF, cost: float = 0.0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable name {name!r}")
        if not lb <= ub:
            raise ValueError(f"variable {name!r}: lower bound {lb} exceeds upper bound {ub}")
        j = len(self.var_names)
        self.var_names.append(name)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._cost.append(float(cost))
        self._index[name] = j
        return j

    def index(self, name: str) -> int:
        return self._index[name]

    def set_bounds(self, j: int, lb: float, ub: float) -> None:
        if not lb <= ub:
            raise ValueError(f"variable {self.var_names[j]!r}: lower bound {lb} exceeds upper bound {ub}")
        self._lb[j] = float(lb)
        self._ub[j] = float(ub)

    def set_cost(self, j: int, cost: float) -> None:
        self._cost[j] = float(cost)

    def add_cost(self, j: int, cost: float) -> None:
        self._cost[j] += float(cost)

    @property
    def lb(self) -> np.ndarray:
        return np.array(self._lb, dtype=float)

    @property
    def ub(self) -> np.ndarray:
        return np.array(self._ub, dtype=float)

    @property
    def cost(self) -> np.ndarray:
        return np.array(self._cost, dtype=float)

    # -- constraints -----------------------------------------------------
    def add_constraint(self, coeffs, relation, rhs: float, name: str | None = None) -> int:
        """Add ``sum(coef * x) <relation> rhs``.

        ``coeffs`` is a mapping or an iterable of ``(var, coef)`` pairs where
        ``var`` is an index or a declared name. Repeated variables are summed.
        """
        rel = relation if isinstance(relation, Relation) else _REL[relation]
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        acc: dict[int, float] = {}
        for var, coef in items:
            j = self._index[var] if isinstance(var, str) else int(var)
            if not 0 <= j < len(self.var_names):
                raise KeyError(f"constraint references undeclared variable {var!r}")
            acc[j] = acc.get(j, 0.0) + float(coef)
        idx = np.fromiter(acc.keys(), dtype=np.int64, count=len(acc))
        val = np.fromiter(acc.values(), dtype=float, count=len(acc))
        keep = val != 0.0
        i = len(self.row_names)
        self.row_names.append(name if name is not None else f"c{i}")
        self._row_idx.append(idx[keep])
        self._row_val.append(val[keep])
        self.relations.append(rel)
        self._rhs.append(float(rhs))
        return i

    @property
    def rhs(self) -> np.ndarray:
        return np.array(self._rhs, dtype=float)

    def set_rhs(self, i: int, rhs: float) -> None:
        self._rhs[i] = float(rhs)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self._row_idx[i], self._row_val[i]

    def matrix(self) -> sp.csr_matrix:
        m, n = self.n_cons, self.n_vars
        if m == 0:
            return sp.csr_matrix((0, n))
        lengths = [len(r) for r in self._row_idx]
        indptr = np.concatenate([[0], np.cumsum(lengths)])
        indices = np.concatenate(self._row_idx) if indptr[-1] else np.zeros(0, dtype=np.int64)
        data = np.concatenate(self._row_val) if indptr[-1] else np.zeros(0)
        return sp.csr_matrix((data, indices, indptr), shape=(m, n))

    def copy(self) -> "LinearProgram":
        other = self.__class__.__new__(self.__class__)
        other.__dict__.update(self.__dict__)
        for attr in ("var_names", "_lb", "_ub", "_cost", "row_names", "_row_idx",
                     "_row_val", "relations", "_rhs"):
            setattr(other, attr, list(getattr(self, attr)))
        other._index = dict(self._index)
        other.meta = dict(self.meta)
        if hasattr(self, "integer"):
            other.integer = list(self.integer)
        return other

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.cost @ x) + self.objective_constant

    def max_violation(self, x: np.ndarray) -> float:
        """Largest bound or row violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        worst = float(max(np.max(self.lb - x, initial=0.0), np.max(x - self.ub, initial=0.0)))
        if self.n_cons:
            ax = self.matrix() @ x
            b = self.rhs
            for i, rel in enumerate(self.relations):
                r = ax[i] - b[i]
                if rel is Relation.LE:
                    worst = max(worst, r)
                elif rel is Relation.GE:
                    worst = max(worst, -r)
                else:
                    worst = max(worst, abs(r))
        return worst


class MixedIntegerProgram(LinearProgram):
    """A :class:`LinearProgram` with an integrality set."""

    def __init__(self, name: str = "mip"):
        super().__init__(name)
        self.integer: list[int] = []

    @classmethod
    def from_lp(cls, lp: LinearProgram, integer: Iterable[int] = ()) -> "MixedIntegerProgram":
        mip = cls.__new__(cls)
        mip.__dict__.update(lp.copy().__dict__)
        mip.integer = sorted(set(int(j) for j in integer))
        return mip

    def add_var(self, name, lb=0.0, ub=INF, cost=0.0, integer: bool = False) -> int:
        j = super().add_var(name, lb, ub, cost)
        if integer:
            self.integer.append(j)
        return j

    def add_binary(self, name: str, cost: float = 0.0) -> int:
        return self.add_var(name, 0.0, 1.0, cost, integer=True)

    def relaxation(self) -> LinearProgram:
        lp = LinearProgram.__new__(LinearProgram)
        lp.__dict__.update(self.copy().__dict__)
        lp.__dict__.pop("integer", None)
        return lp


@dataclass
class Solution:
    status: Status
    x: np.ndarray | None = None
    objective: float = math.nan
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    # branch-and-bound bookkeeping (MILP only)
    bound: float = math.nan
    nodes: int = 0
    branches: int = 0
    gap: float = math.nan
    var_names: list[str] = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def value(self, var) -> float:
        j = self.var_names.index(var) if isinstance(var, str) else int(var)
        return float(self.x[j])
