"""History tables, scenario sets and their CSV form."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from gridtwin.errors import DimensionMismatch, EmptyInput, ParseError, ValidationError


@dataclass(frozen=True)
class HistoryTable:
    """Observations: rows are timestamps (or days), columns are assets.

    With ``steps > 1`` each row holds a whole day and the columns are ordered
    step-major, i.e. column ``t * len(assets) + j`` is asset ``j`` at step ``t``.
    """

    values: np.ndarray
    assets: tuple
    steps: int = 1

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        assets = tuple(str(a) for a in self.assets)
        if v.ndim != 2 or v.shape[0] < 2:
            raise ValidationError("history needs at least 2 rows")
        if len(set(assets)) != len(assets):
            raise ValidationError("history asset names must be unique")
        if v.shape[1] != len(assets) * self.steps:
            raise DimensionMismatch(f"history has {v.shape[1]} columns, expected "
                                    f"{len(assets)} assets x {self.steps} steps")
        if not np.all(np.isfinite(v)):
            raise ValidationError("history has missing or non-finite values")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "assets", assets)

    @property
    def columns(self) -> tuple:
        if self.steps == 1:
            return self.assets
        return tuple(f"{a}@{t}" for t in range(self.steps) for a in self.assets)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def differences(self) -> np.ndarray:
        """Per-asset first differences along the time axis."""
        return np.diff(self.series(), axis=0)

    def series(self) -> np.ndarray:
        """Observations as one long (time x assets) series."""
        return self.values.reshape(-1, len(self.assets))

    def by_day(self, steps: int) -> "HistoryTable":
        """Fold a time series into one row per day of ``steps`` timesteps."""
        if self.steps != 1:
            raise ValidationError("history is already folded by day")
        m = self.n_rows // steps
        if m < 2:
            raise ValidationError(f"need at least two whole days of {steps} steps")
        return HistoryTable(self.values[:m * steps].reshape(m, steps * len(self.assets)),
                            self.assets, steps)

    def select(self, assets) -> "HistoryTable":
        idx = [self.assets.index(str(a)) for a in assets]
        cols = [t * len(self.assets) + j for t in range(self.steps) for j in idx]
        return HistoryTable(self.values[:, cols], tuple(self.assets[j] for j in idx), self.steps)


@dataclass(frozen=True)
class ScenarioSet:
    """Equiprobable trajectories, shape (n scenarios, T steps, d assets), MW."""

    values: np.ndarray
    assets: tuple
    step_minutes: int = 60

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[0] < 1:
            raise ValidationError("scenario set must be n x T x d with n >= 1")
        if v.shape[2] != len(self.assets):
            raise DimensionMismatch("scenario assets do not match the value array")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValidationError("scenario values must be finite and nonnegative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def steps(self) -> int:
        return self.values.shape[1]

    @property
    def probabilities(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def flat(self) -> np.ndarray:
        """Scenarios as vectors in R^(T*d)."""
        return self.values.reshape(self.n, -1)

    def total(self) -> np.ndarray:
        """Sum over assets, shape (n, T)."""
        return self.values.sum(axis=2)


def _fmt(v: float) -> str:
    return repr(float(v))


def history_to_csv(history: HistoryTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(history.assets)
    for row in history.series():
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _read_rows(text: str, what: str):
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise EmptyInput(f"{what}: empty file")
    return rows[0], rows[1:]


def _floats(rows, what, first=0):
    try:
        return np.array([[float(x) for x in r[first:]] for r in rows], dtype=float)
    except ValueError as exc:
        raise ParseError(f"{what}: non-numeric value ({exc})") from exc


def history_from_csv(text: str) -> HistoryTable:
    header, rows = _read_rows(text, "history")
    if any(len(r) != len(header) for r in rows):
        raise ParseError("history: ragged rows")
    return HistoryTable(_floats(rows, "history"), tuple(h.strip() for h in header))


def scenarios_to_csv(scen: ScenarioSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("scenario",) + scen.assets)
    for i in range(scen.n):
        for row in scen.values[i]:
            w.writerow([str(i)] + [_fmt(v) for v in row])
    return buf.getvalue()


def scenarios_from_csv(text: str, step_minutes: int = 60) -> ScenarioSet:
    header, rows = _read_rows(text, "scenarios")
    if not header or header[0].strip() != "scenario":
        raise ParseError("scenarios: first column must be 'scenario'")
    if any(len(r) != len(header) for r in rows):
        raise ParseError("scenarios: ragged rows")
    if not rows:
        raise EmptyInput("scenarios: no rows")
    try:
        ids = [int(r[0]) for r in rows]
    except ValueError as exc:
        raise ParseError(f"scenarios: bad scenario index ({exc})") from exc
    vals = _floats(rows, "scenarios", first=1)
    order = list(dict.fromkeys(ids))
    if order != list(range(len(order))) or np.any(np.diff(ids) < 0):
        raise ParseError("scenarios: indices must run 0..n-1 in order")
    counts = np.bincount(ids)
    if np.any(counts != counts[0]):
        raise ParseError("scenarios: every scenario needs the same number of steps")
    return ScenarioSet(vals.reshape(len(order), counts[0], -1),
                       tuple(h.strip() for h in header[1:]), step_minutes)
