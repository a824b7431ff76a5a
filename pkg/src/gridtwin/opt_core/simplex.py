"""Bounded-variable primal simplex on a dense tableau.

Every row is turned into an equality ``a.x + s = b`` whose slack ``s`` carries
the row sense in its bounds (``<=``: s >= 0, ``>=``: s <= 0, ``=``: s = 0).
Structural variables keep their own bounds, so upper bounds never become rows.
Phase 1 minimizes the sum of artificial variables added to rows whose slack
cannot absorb the initial residual.
"""
from __future__ import annotations

import math
import time

import numpy as np
import scipy.linalg as sla

from gridtwin.errors import NumericalFailure
from gridtwin.opt_core.model import LinearProgram, Relation, Solution, Status

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
SINGULAR_TOL = 1e-12

AT_LOWER, AT_UPPER, FREE_ZERO, BASIC = 0, 1, 2, 3


class _Timeout(Exception):
    pass


class SimplexEngine:
    """Standard form of one constraint matrix, solvable for many bound vectors.

    Branch-and-bound only changes variable bounds between nodes, so the
    matrix is prepared once and :meth:`solve` is called per node.
    """

    def __init__(self, cost, A, rhs, relations):
        A = np.asarray(A, dtype=float)
        m0, n = A.shape if A.ndim == 2 else (0, len(cost))
        self.n = n
        self.m0 = m0
        self.cost = np.asarray(cost, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        rel = list(relations)
        nonempty = np.any(A != 0.0, axis=1) if m0 else np.zeros(0, dtype=bool)
        self.rows = np.flatnonzero(nonempty)
        self.empty_ok = True
        for i in np.flatnonzero(~nonempty):
            b, r = rhs[i], rel[i]
            if (r is Relation.LE and b < -FEAS_TOL) or (r is Relation.GE and b > FEAS_TOL) or (
                r is Relation.EQ and abs(b) > FEAS_TOL
            ):
                self.empty_ok = False
        self.A = A[self.rows] if m0 else np.zeros((0, n))
        self.b = rhs[self.rows] if m0 else np.zeros(0)
        m = len(self.rows)
        self.m = m
        self.slack_lb = np.empty(m)
        self.slack_ub = np.empty(m)
        for k, i in enumerate(self.rows):
            r = rel[i]
            self.slack_lb[k] = 0.0 if r is not Relation.GE else -math.inf
            self.slack_ub[k] = 0.0 if r is not Relation.LE else math.inf
        self.b_scale = 1.0 + (float(np.max(np.abs(self.b))) if m else 0.0)

    @classmethod
    def from_lp(cls, lp: LinearProgram) -> "SimplexEngine":
        return cls(lp.cost, lp.matrix().toarray(), lp.rhs, lp.relations)

    # ------------------------------------------------------------------
    def solve(self, lb, ub, deadline: float | None = None) -> Solution:
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        if not self.empty_ok or np.any(lb > ub + FEAS_TOL):
            return Solution(Status.INFEASIBLE)
        run = _Run(self, lb, ub, deadline)
        return run.solve()


class _Run:
    """State of one simplex solve (tableau, basis, values)."""

    def __init__(self, eng: SimplexEngine, lb, ub, deadline):
        self.eng = eng
        self.deadline = deadline
        n, m = eng.n, eng.m
        A, b = eng.A, eng.b

        xs = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
        res = b - A @ xs
        s0 = np.clip(res, eng.slack_lb, eng.slack_ub)
        gap = res - s0
        art_rows = np.flatnonzero(np.abs(gap) > FEAS_TOL * (1.0 + np.abs(res)))
        k = len(art_rows)
        sigma = np.sign(gap[art_rows])
        self.n_art = k
        N = n + m + k
        self.N = N

        M = np.zeros((m, N))
        M[:, :n] = A
        M[np.arange(m), n + np.arange(m)] = 1.0
        M[art_rows, n + m + np.arange(k)] = sigma
        self.M = M
        self.L = np.concatenate([lb, eng.slack_lb, np.zeros(k)])
        self.U = np.concatenate([ub, eng.slack_ub, np.full(k, math.inf)])

        x = np.zeros(N)
        x[:n] = xs
        x[n:n + m] = res
        x[n + art_rows] = s0[art_rows]
        x[n + m:] = np.abs(gap[art_rows])
        self.x = x

        basis = n + np.arange(m)
        basis[art_rows] = n + m + np.arange(k)
        self.basis = basis
        state = np.empty(N, dtype=np.int8)
        state[:] = AT_LOWER
        free = ~np.isfinite(self.L) & ~np.isfinite(self.U)
        state[free] = FREE_ZERO
        state[np.isfinite(self.U) & ~np.isfinite(self.L)] = AT_UPPER
        # slacks for artificial rows sit at whichever bound clipped them
        for i in art_rows:
            j = n + i
            state[j] = AT_LOWER if x[j] == self.L[j] else AT_UPPER
        state[basis] = BASIC
        self.state = state

        diag = np.ones(m)
        diag[art_rows] = sigma
        self.T = diag[:, None] * M
        self.xB = x[basis].copy()
        self.iterations = 0

    # ------------------------------------------------------------------
    def solve(self) -> Solution:
        eng = self.eng
        n, m, N = eng.n, eng.m, self.N
        if self.n_art:
            c1 = np.zeros(N)
            c1[n + m:] = 1.0
            status = self._iterate(c1)
            infeas = float(np.sum(self.xB[self.basis >= n + m]))
            if status is not Status.OPTIMAL or infeas > 1e-8 * eng.b_scale:
                return Solution(Status.INFEASIBLE, iterations=self.iterations)
            # artificials are pinned to zero from here on
            self.U[n + m:] = 0.0
            art_nb = (np.arange(N) >= n + m) & (self.state != BASIC)
            self.state[art_nb] = AT_LOWER
            self.x[art_nb] = 0.0
        c2 = np.zeros(N)
        c2[:n] = eng.cost
        status = self._iterate(c2)
        if status is Status.UNBOUNDED:
            return Solution(Status.UNBOUNDED, iterations=self.iterations)
        self._refactor(c2)
        x = self.x.copy()
        x[self.basis] = self.xB
        B = self.M[:, self.basis]
        y = np.linalg.solve(B.T, c2[self.basis]) if m else np.zeros(0)
        duals = np.zeros(eng.m0)
        duals[eng.rows] = y
        rc = eng.cost - eng.A.T @ y if m else eng.cost.copy()
        xs = x[:n]
        return Solution(
            Status.OPTIMAL,
            x=xs,
            objective=float(eng.cost @ xs),
            duals=duals,
            reduced_costs=rc,
            iterations=self.iterations,
        )

    # ------------------------------------------------------------------
    def _refactor(self, cost) -> np.ndarray:
        m = self.eng.m
        if m == 0:
            self.d = cost.copy()
            return self.d
        B = self.M[:, self.basis]
        try:
            lu, piv = sla.lu_factor(B, check_finite=False)
        except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover
            raise NumericalFailure(f"basis factorization failed: {exc}") from exc
        udiag = np.abs(np.diag(lu))
        if udiag.min() < SINGULAR_TOL * max(1.0, udiag.max()):
            raise NumericalFailure("basis matrix numerically singular")
        self.T = sla.lu_solve((lu, piv), self.M, check_finite=False)
        nonbasic = self.state != BASIC
        rhs = self.eng.b - self.M[:, nonbasic] @ self.x[nonbasic]
        self.xB = sla.lu_solve((lu, piv), rhs, check_finite=False)
        self.d = cost - cost[self.basis] @ self.T
        return self.d

    def _iterate(self, cost) -> Status:
        eng = self.eng
        m, n = eng.m, eng.n
        L, U, x, state = self.L, self.U, self.x, self.state
        if m:
            d = cost - cost[self.basis] @ self.T
        else:
            d = cost.copy()
        self.d = d
        movable = U > L
        bland_after = 5 * (m + n)
        max_iter = 50 * (m + n) + 5000
        refactor_every = max(100, m // 2)
        degenerate = 0
        since_refactor = 0
        local_iter = 0
        while True:
            if self.deadline is not None and time.monotonic() > self.deadline:
                raise _Timeout()
            if since_refactor >= refactor_every:
                d = self._refactor(cost)
                since_refactor = 0
            d = self.d
            inc = (state == AT_LOWER) & (d < -OPT_TOL) & movable
            dec = (state == AT_UPPER) & (d > OPT_TOL) & movable
            fre = (state == FREE_ZERO) & (np.abs(d) > OPT_TOL)
            elig = inc | dec | fre
            if not elig.any():
                return Status.OPTIMAL
            if degenerate > bland_after:
                q = int(np.argmax(elig))
            else:
                q = int(np.argmax(np.where(elig, np.abs(d), 0.0)))
            direction = 1.0 if d[q] < 0 else -1.0

            alpha = self.T[:, q] * direction if m else np.zeros(0)
            xB = self.xB
            basis = self.basis
            ratios = np.full(m, math.inf)
            harris = np.full(m, math.inf)
            if m:
                # pivots small relative to the column are treated as zero
                ptol = PIVOT_TOL * max(1.0, float(np.abs(alpha).max()))
                pos = alpha > ptol
                neg = alpha < -ptol
                Lb = L[basis]
                Ub = U[basis]
                with np.errstate(invalid="ignore"):
                    ratios[pos] = (xB[pos] - Lb[pos]) / alpha[pos]
                    ratios[neg] = (Ub[neg] - xB[neg]) / (-alpha[neg])
                    harris[pos] = (xB[pos] - Lb[pos] + FEAS_TOL) / alpha[pos]
                    harris[neg] = (Ub[neg] - xB[neg] + FEAS_TOL) / (-alpha[neg])
                np.maximum(ratios, 0.0, out=ratios)
                ratios[np.isnan(ratios)] = math.inf
                harris[np.isnan(harris)] = math.inf
            tmin = float(ratios.min()) if m else math.inf
            tflip = U[q] - L[q]

            local_iter += 1
            self.iterations += 1
            if local_iter > max_iter:
                raise NumericalFailure("simplex iteration limit exceeded (cycling guard)")

            if tflip <= tmin:
                if math.isinf(tflip):
                    return Status.UNBOUNDED
                # bound flip: entering variable crosses to its opposite bound
                if m:
                    xB -= tflip * alpha
                if state[q] == AT_LOWER:
                    x[q] = U[q]
                    state[q] = AT_UPPER
                else:
                    x[q] = L[q]
                    state[q] = AT_LOWER
                degenerate = 0
                continue
            if math.isinf(tmin):
                return Status.UNBOUNDED

            if degenerate > bland_after:
                cand = np.flatnonzero(ratios <= tmin + 1e-12 * (1.0 + tmin))
                r = int(cand[np.argmin(basis[cand])])
            else:
                # two-pass (Harris) test: the largest pivot among rows that
                # block within the feasibility tolerance
                cand = np.flatnonzero(ratios <= max(float(harris.min()), tmin))
                r = int(cand[np.argmax(np.abs(alpha[cand]))])
            t = float(ratios[r])
            if t > tflip:  # the chosen row blocks later than the bound flip
                r = int(np.argmin(ratios))
                t = tmin
            if abs(self.T[r, q]) < PIVOT_TOL:  # pragma: no cover - filtered above
                raise NumericalFailure("pivot element below threshold")

            xB -= t * alpha
            leaving = basis[r]
            if alpha[r] > 0:
                x[leaving] = L[leaving]
                state[leaving] = AT_LOWER
            else:
                x[leaving] = U[leaving]
                state[leaving] = AT_UPPER
            entering_value = x[q] + direction * t
            xB[r] = entering_value
            basis[r] = q
            state[q] = BASIC

            T = self.T
            piv = T[r, q]
            T[r, :] /= piv
            col = T[:, q].copy()
            col[r] = 0.0
            T -= np.outer(col, T[r, :])
            d -= d[q] * T[r, :]
            since_refactor += 1
            degenerate = degenerate + 1 if t <= 1e-12 else 0


def solve_lp_native(lp: LinearProgram, time_limit: float | None = None) -> Solution:
    deadline = time.monotonic() + time_limit if time_limit else None
    eng = SimplexEngine.from_lp(lp)
    try:
        sol = eng.solve(lp.lb, lp.ub, deadline)
    except _Timeout:
        raise NumericalFailure("LP time limit exceeded") from None
    if sol.status is Status.OPTIMAL:
        sol.objective += lp.objective_constant
    sol.var_names = lp.var_names
    return sol
