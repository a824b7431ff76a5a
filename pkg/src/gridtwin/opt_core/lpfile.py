"""CPLEX-style LP text dump, for cross-checking a model in another solver."""
from __future__ import annotations

import io
import math
import re
from pathlib import Path

from gridtwin.opt_core.model import LinearProgram, Relation

_BAD = re.compile(r"[^A-Za-z0-9_\[\],.()]")


def _name(s: str) -> str:
    s = _BAD.sub("_", s)
    return s if not s[:1].isdigit() and s[:1] not in ".e" else "_" + s


def _terms(pairs) -> str:
    out = []
    for coef, name in pairs:
        sign = "-" if coef < 0 else "+"
        out.append(f"{sign} {abs(coef):.17g} {name}")
    text = " ".join(out) if out else "0 " + "__zero"
    return text[2:] if text.startswith("+ ") else text


def write_lp_text(lp: LinearProgram, path=None) -> str:
    """Render ``lp`` in LP format; write it to ``path`` when given."""
    names = [_name(v) for v in lp.var_names]
    buf = io.StringIO()
    buf.write(f"\\ {lp.name}\n")
    if lp.objective_constant:
        buf.write(f"\\ objective constant {lp.objective_constant:.17g}\n")
    buf.write("Minimize\n obj: ")
    cost = lp.cost
    buf.write(_terms([(cost[j], names[j]) for j in range(lp.n_vars) if cost[j] != 0]) + "\n")
    buf.write("Subject To\n")
    ops = {Relation.LE: "<=", Relation.GE: ">=", Relation.EQ: "="}
    rhs = lp.rhs
    for i in range(lp.n_cons):
        idx, val = lp.row(i)
        body = _terms([(v, names[j]) for j, v in zip(idx, val)])
        buf.write(f" {_name(lp.row_names[i])}: {body} {ops[lp.relations[i]]} {rhs[i]:.17g}\n")
    buf.write("Bounds\n")
    for j, (lo, hi) in enumerate(zip(lp.lb, lp.ub)):
        if math.isinf(lo) and math.isinf(hi):
            buf.write(f" {names[j]} free\n")
        elif lo == hi:
            buf.write(f" {names[j]} = {lo:.17g}\n")
        else:
            lo_s = "-inf" if math.isinf(lo) else f"{lo:.17g}"
            hi_s = "+inf" if math.isinf(hi) else f"{hi:.17g}"
            buf.write(f" {lo_s} <= {names[j]} <= {hi_s}\n")
    integer = getattr(lp, "integer", None)
    if integer:
        buf.write("General\n")
        for j in integer:
            buf.write(f" {names[j]}\n")
    buf.write("End\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
