"""Dense two-phase revised simplex with variable bounds.

Solves  min c'x  s.t.  A x {=, <=, >=} b,  lb <= x <= ub.

Each row receives a slack column (fixed at zero for equalities), and rows
whose slack cannot absorb the initial residual receive an artificial that
phase 1 drives to zero.  The basis inverse is kept dense and refactorized
periodically.  Pivoting is deterministic: most-negative reduced cost with
lowest-index tie breaking, switching to Bland's rule when the objective
stalls, so repeated solves of the same data give identical bases and duals.

The restricted master problem is tiny (tens of rows, a column pool in the
low thousands), which is what makes a dense implementation the right tool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
REFACTOR_EVERY = 100
MAX_PIVOTS = 1_000_000
_STALL_LIMIT = 200

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2


class InfeasibleLP(Exception):
    """The constraint system admits no point within bounds."""


class SimplexError(RuntimeError):
    """Numerical failure or pivot-limit blowout; carries a state dump."""


@dataclass
class LPSolution:
    objective: float
    x: np.ndarray  # structural variables only
    duals: np.ndarray  # one per row
    pivots: int


def solve(
    c: np.ndarray,
    A: np.ndarray,
    senses: list[str],
    b: np.ndarray,
    ub: np.ndarray,
    lb: np.ndarray | None = None,
) -> LPSolution:
    """Solve the bounded LP; raises :class:`InfeasibleLP` when empty."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    ub = np.asarray(ub, dtype=float)
    m, n = A.shape
    lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
    if len(senses) != m:
        raise ValueError("one sense per row required")

    # slack columns: <= gets [0, inf), >= gets (-inf, 0], = gets [0, 0]
    slack_lb = np.zeros(m)
    slack_ub = np.zeros(m)
    for i, sense in enumerate(senses):
        if sense == "<=":
            slack_lb[i], slack_ub[i] = 0.0, np.inf
        elif sense == ">=":
            slack_lb[i], slack_ub[i] = -np.inf, 0.0
        elif sense == "=":
            slack_lb[i], slack_ub[i] = 0.0, 0.0
        else:
            raise ValueError(f"unknown row sense {sense!r}")

    full_A = np.hstack([A, np.eye(m)])
    full_lb = np.concatenate([lb, slack_lb])
    full_ub = np.concatenate([ub, slack_ub])
    full_c = np.concatenate([c, np.zeros(m)])

    tab = _Tableau(full_A, b, full_lb, full_ub)
    tab.phase1()
    tab.phase2(full_c)
    x = tab.values()
    duals = tab.duals(tab.pad(full_c))
    return LPSolution(
        objective=float(full_c @ x[: n + m]),
        x=x[:n].copy(),
        duals=duals,
        pivots=tab.pivots,
    )


class _Tableau:
    def __init__(self, A: np.ndarray, b: np.ndarray, lb: np.ndarray, ub: np.ndarray):
        self.m, n_cols = A.shape
        self.b = b.astype(float)
        self.pivots = 0

        # Nonbasic variables start on the finite bound; a slack becomes basic
        # when the row residual fits inside its bounds, otherwise an
        # artificial column absorbs the residual so the start is feasible.
        status = np.full(n_cols, AT_LOWER, dtype=int)
        status[~np.isfinite(lb)] = AT_UPPER
        start = np.where(status == AT_UPPER, ub, lb)
        residual = b - A @ start

        self.basis = np.empty(self.m, dtype=int)
        art_rows = []
        n_slackbase = n_cols - self.m
        for i in range(self.m):
            slack = n_slackbase + i
            val = start[slack] + residual[i]
            if lb[slack] - FEAS_TOL <= val <= ub[slack] + FEAS_TOL:
                self.basis[i] = slack
                status[slack] = BASIC
            else:
                art_rows.append(i)

        if art_rows:
            extra = np.zeros((self.m, len(art_rows)))
            for k, i in enumerate(art_rows):
                extra[i, k] = 1.0 if residual[i] >= 0 else -1.0
                self.basis[i] = n_cols + k
            A = np.hstack([A, extra])
            lb = np.concatenate([lb, np.zeros(len(art_rows))])
            ub = np.concatenate([ub, np.full(len(art_rows), np.inf)])
            status = np.concatenate([status, np.full(len(art_rows), BASIC, dtype=int)])

        self.A = A
        self.lb = lb
        self.ub = ub
        self.status = status
        self.n_artificial = len(art_rows)
        self.n_total = A.shape[1]
        self._refactor()

    # -- linear algebra ----------------------------------------------------
    def _refactor(self) -> None:
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SimplexError(f"singular basis {self.basis.tolist()}") from exc

    def values(self) -> np.ndarray:
        vals = np.where(self.status == AT_UPPER, self.ub, self.lb)
        vals[~np.isfinite(vals)] = 0.0
        vals[self.basis] = 0.0
        vals[self.basis] = self.Binv @ (self.b - self.A @ vals)
        return vals

    def duals(self, c: np.ndarray) -> np.ndarray:
        return c[self.basis] @ self.Binv

    def pad(self, c: np.ndarray) -> np.ndarray:
        if len(c) == self.n_total:
            return c
        return np.concatenate([c, np.zeros(self.n_total - len(c))])

    # -- phases --------------------------------------------------------------
    def phase1(self) -> None:
        if self.n_artificial == 0:
            return
        c1 = np.zeros(self.n_total)
        c1[self.n_total - self.n_artificial :] = 1.0
        self._optimize(c1, phase=1)
        infeas = float(c1 @ self.values())
        if infeas > 1e-7:
            raise InfeasibleLP(f"phase 1 ends with infeasibility {infeas:.3e}")
        # artificials stay pinned at zero from here on
        self.ub[self.n_total - self.n_artificial :] = 0.0

    def phase2(self, c: np.ndarray) -> None:
        self._optimize(self.pad(c), phase=2)

    # -- simplex core ----------------------------------------------------------
    def _optimize(self, c: np.ndarray, phase: int) -> None:
        stall = 0
        last_obj = np.inf
        bland = False
        fixed = self.lb == self.ub
        while True:
            if self.pivots > MAX_PIVOTS:
                raise SimplexError(
                    f"pivot limit exceeded in phase {phase}; basis={self.basis.tolist()}"
                )
            x = self.values()
            obj = float(c @ x)
            if obj < last_obj - 1e-12:
                stall = 0
                last_obj = obj
            else:
                stall += 1
                if stall > _STALL_LIMIT:
                    bland = True

            d = c - self.duals(c) @ self.A
            cand_lo = (self.status == AT_LOWER) & ~fixed & (d < -OPT_TOL)
            cand_hi = (self.status == AT_UPPER) & ~fixed & (d > OPT_TOL)
            any_cand = cand_lo | cand_hi
            if not any_cand.any():
                return
            if bland:
                entering = int(np.nonzero(any_cand)[0][0])
            else:
                score = np.zeros(self.n_total)
                score[cand_lo] = d[cand_lo]
                score[cand_hi] = -d[cand_hi]
                entering = int(np.argmin(score))
            self._pivot(entering, x)

    def _pivot(self, entering: int, x: np.ndarray) -> None:
        increase = self.status[entering] == AT_LOWER
        w = self.Binv @ self.A[:, entering]
        if not increase:
            w = -w

        own_range = self.ub[entering] - self.lb[entering]
        best_t = own_range if np.isfinite(own_range) else np.inf
        leave_row = -1
        leave_to_upper = False
        xb = x[self.basis]
        for i in range(self.m):
            bi = self.basis[i]
            if w[i] > FEAS_TOL:
                bound = self.lb[bi]
                if not np.isfinite(bound):
                    continue
                t = (xb[i] - bound) / w[i]
                to_upper = False
            elif w[i] < -FEAS_TOL:
                bound = self.ub[bi]
                if not np.isfinite(bound):
                    continue
                t = (xb[i] - bound) / w[i]
                to_upper = True
            else:
                continue
            t = max(t, 0.0)
            if t < best_t - 1e-12:
                best_t = t
                leave_row = i
                leave_to_upper = to_upper
            elif leave_row >= 0 and t <= best_t + 1e-12 and bi < self.basis[leave_row]:
                leave_row = i
                leave_to_upper = to_upper

        if not np.isfinite(best_t):
            raise SimplexError(f"unbounded direction on column {entering}")

        self.pivots += 1
        if leave_row < 0:
            # bound flip: entering runs all the way to its other bound
            self.status[entering] = AT_UPPER if increase else AT_LOWER
            return

        leaving = self.basis[leave_row]
        self.status[leaving] = AT_UPPER if leave_to_upper else AT_LOWER
        self.basis[leave_row] = entering
        self.status[entering] = BASIC

        if self.pivots % REFACTOR_EVERY == 0:
            self._refactor()
            return
        col = self.Binv @ self.A[:, entering]
        pv = col[leave_row]
        if abs(pv) < 1e-11:
            self._refactor()
            return
        row_r = self.Binv[leave_row, :].copy()
        factor = col / pv
        factor[leave_row] = 0.0
        self.Binv -= np.outer(factor, row_r)
        self.Binv[leave_row, :] = row_r / pv
