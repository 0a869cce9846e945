"""Dense two-phase simplex with Bland's pivoting rule.

Problems here are small (a few hundred rows at most), so everything lives in
one dense numpy tableau. Bland's rule makes the pivot sequence a pure function
of the input, which keeps every downstream report reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-9
CHECK_TOL = 1e-8
MAX_PIVOTS = 100_000
REFRESH_EVERY = 16

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LPError(RuntimeError):
    """Numerical failure inside the simplex (cycling guard, bad residuals)."""


@dataclass
class LPResult:
    status: str
    x: Optional[np.ndarray] = None
    value: float = float("nan")
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class LinearProgram:
    """min (or max) c.x subject to row constraints and variable bounds.

    Rows are added in blocks with a sense of ``"<="``, ``"=="`` or ``">="``.
    Bounds default to ``[0, inf)``.
    """

    n_vars: int
    c: np.ndarray = None
    maximize: bool = False
    rows: list = field(default_factory=list)
    senses: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        if self.c is None:
            self.c = np.zeros(self.n_vars)
        if self.lower is None:
            self.lower = np.zeros(self.n_vars)
        if self.upper is None:
            self.upper = np.full(self.n_vars, np.inf)

    def set_objective(self, c, maximize: bool = False) -> None:
        c = np.asarray(c, dtype=float)
        if c.shape != (self.n_vars,):
            raise ValueError(f"objective has shape {c.shape}, expected ({self.n_vars},)")
        self.c = c
        self.maximize = maximize

    def add_constraints(self, A, sense: str, b) -> None:
        if sense not in ("<=", "==", ">="):
            raise ValueError(f"unknown constraint sense {sense!r}")
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.broadcast_to(np.asarray(b, dtype=float), (A.shape[0],))
        if A.shape[1] != self.n_vars:
            raise ValueError(f"constraint block has {A.shape[1]} columns, expected {self.n_vars}")
        for row, rhs in zip(A, b):
            self.rows.append(row)
            self.senses.append(sense)
            self.rhs.append(float(rhs))

    def set_bounds(self, index, lower=None, upper=None) -> None:
        if lower is not None:
            self.lower[index] = lower
        if upper is not None:
            self.upper[index] = upper

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def matrix(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, self.n_vars))
        return np.vstack(self.rows)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint or bound violation of a candidate point."""
        worst = 0.0
        if self.rows:
            ax = self.matrix() @ x
            b = np.asarray(self.rhs)
            for val, sense, rhs in zip(ax, self.senses, b):
                if sense == "<=":
                    worst = max(worst, val - rhs)
                elif sense == ">=":
                    worst = max(worst, rhs - val)
                else:
                    worst = max(worst, abs(val - rhs))
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)))
        worst = max(worst, float(np.max(x - self.upper, initial=0.0)))
        return worst

    def solve(self) -> LPResult:
        return Simplex(self).optimize(self.c, maximize=self.maximize)


class Simplex:
    """Phase-1 work for one constraint set, reusable across many objectives.

    ``Simplex(lp).optimize(c)`` runs phase 2 from a copy of the feasible
    basis found once at construction.
    """

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        self._standardize()
        self._phase_one()

    # -- standard form ---------------------------------------------------
    def _standardize(self) -> None:
        lp = self.lp
        n = lp.n_vars
        # x_j = shift_j + sum_k scale_jk * y_k over nonnegative y
        cols = []  # (original index, sign)
        shift = np.zeros(n)
        extra_rows, extra_rhs = [], []
        for j in range(n):
            lo, hi = lp.lower[j], lp.upper[j]
            if lo > hi + FEAS_TOL:
                raise ValueError(f"variable {j} has empty bounds [{lo}, {hi}]")
            if np.isfinite(lo):
                shift[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    extra_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                shift[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        n_y = len(cols)
        T = np.zeros((n, n_y))
        for k, (j, s) in enumerate(cols):
            T[j, k] = s
        self._map = T
        self._shift = shift

        A = lp.matrix() @ T if lp.rows else np.zeros((0, n_y))
        b = np.asarray(lp.rhs, dtype=float) - (lp.matrix() @ shift if lp.rows else 0.0)
        senses = list(lp.senses)
        if extra_rows:
            ub = np.zeros((len(extra_rows), n_y))
            for r, (k, cap) in enumerate(extra_rows):
                ub[r, k] = 1.0
            A = np.vstack([A, ub])
            b = np.concatenate([b, [cap for _, cap in extra_rows]])
            senses += ["<="] * len(extra_rows)

        m = A.shape[0]
        flip = b < 0
        A[flip] *= -1.0
        b = np.where(flip, -b, b)
        senses = [
            {"<=": ">=", ">=": "<=", "==": "=="}[s] if f else s for s, f in zip(senses, flip)
        ]
        n_slack = sum(1 for s in senses if s != "==")
        n_art = sum(1 for s in senses if s != "<=")
        width = n_y + n_slack + n_art
        tab = np.zeros((m, width + 1))
        tab[:, :n_y] = A
        tab[:, -1] = b
        basis = [-1] * m
        sc = n_y
        ac = n_y + n_slack
        for i, s in enumerate(senses):
            if s == "<=":
                tab[i, sc] = 1.0
                basis[i] = sc
                sc += 1
            elif s == ">=":
                tab[i, sc] = -1.0
                sc += 1
                tab[i, ac] = 1.0
                basis[i] = ac
                ac += 1
            else:
                tab[i, ac] = 1.0
                basis[i] = ac
                ac += 1
        self._n_y = n_y
        self._n_struct = n_y + n_slack
        self._tab = tab
        self._orig = tab.copy()
        self._basis = basis

    # -- pivoting ----------------------------------------------------------
    @staticmethod
    def _pivot(tab: np.ndarray, basis: list, r: int, j: int) -> None:
        tab[r] /= tab[r, j]
        col = tab[:, j].copy()
        col[r] = 0.0
        tab -= np.outer(col, tab[r])
        basis[r] = j

    @staticmethod
    def _refactor(tab: np.ndarray, basis: list, orig: np.ndarray) -> None:
        """Rebuild B^-1 [A | b] from the original rows to shed pivoting drift."""
        if not basis:
            return
        try:
            fresh = np.linalg.solve(orig[:, basis], orig)
        except np.linalg.LinAlgError:
            return
        fresh[np.abs(fresh) < 1e-14] = 0.0
        tab[:] = fresh

    def _run(self, tab: np.ndarray, basis: list, cost: np.ndarray, n_cols: int,
             orig: np.ndarray) -> tuple[str, int]:
        pivots = 0
        since_refresh = 0
        while True:
            cb = cost[basis]
            reduced = cost[:n_cols] - cb @ tab[:, :n_cols]
            entering = np.flatnonzero(reduced < -FEAS_TOL)
            j = int(entering[0]) if entering.size else -1
            rows = np.flatnonzero(tab[:, j] > PIVOT_TOL) if j >= 0 else None
            if j < 0 or rows.size == 0:
                if since_refresh:
                    # confirm the verdict on a freshly factored tableau
                    self._refactor(tab, basis, orig)
                    since_refresh = 0
                    continue
                return (OPTIMAL if j < 0 else UNBOUNDED), pivots
            col = tab[:, j]
            ratios = np.maximum(tab[rows, -1], 0.0) / col[rows]
            best = ratios.min()
            tied = rows[ratios <= best + FEAS_TOL]
            r = int(min(tied, key=lambda i: basis[i]))
            self._pivot(tab, basis, r, j)
            pivots += 1
            since_refresh += 1
            if since_refresh >= REFRESH_EVERY:
                self._refactor(tab, basis, orig)
                since_refresh = 0
            if pivots > MAX_PIVOTS:
                raise LPError("simplex exceeded pivot limit")

    def _phase_one(self) -> None:
        tab, basis = self._tab, self._basis
        width = tab.shape[1] - 1
        cost = np.zeros(width)
        cost[self._n_struct:] = 1.0
        _, self.phase_one_pivots = self._run(tab, basis, cost, width, self._orig)
        infeas = float(tab[:, -1] @ cost[basis]) if basis else 0.0
        self.feasible = infeas <= FEAS_TOL * max(1.0, float(np.abs(tab[:, -1]).max(initial=0.0)))
        if not self.feasible:
            return
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = []
        for i in range(len(basis)):
            if basis[i] < self._n_struct:
                keep.append(i)
                continue
            row = tab[i, : self._n_struct]
            j = int(np.argmax(np.abs(row))) if row.size else 0
            if row.size and abs(row[j]) > 1e-9:
                self._pivot(tab, basis, i, j)
                keep.append(i)
        self._tab = np.hstack([tab[keep, : self._n_struct], tab[keep, -1:]])
        self._orig = np.hstack([self._orig[keep, : self._n_struct], self._orig[keep, -1:]])
        self._basis = [basis[i] for i in keep]
        self._refactor(self._tab, self._basis, self._orig)

    # -- public ------------------------------------------------------------
    def optimize(self, c: Sequence[float], maximize: bool = False) -> LPResult:
        if not self.feasible:
            return LPResult(INFEASIBLE, pivots=self.phase_one_pivots)
        c = np.asarray(c, dtype=float)
        sign = -1.0 if maximize else 1.0
        cost = np.zeros(self._n_struct)
        cost[: self._n_y] = sign * (c @ self._map)
        tab = self._tab.copy()
        basis = list(self._basis)
        status, pivots = self._run(tab, basis, cost, self._n_struct, self._orig)
        if status != OPTIMAL:
            return LPResult(status, pivots=pivots)
        y = np.zeros(self._n_struct)
        y[basis] = tab[:, -1]
        y = np.maximum(y, 0.0)
        x = self._shift + self._map @ y[: self._n_y]
        viol = self.lp.max_violation(x)
        if viol > CHECK_TOL * max(1.0, float(np.abs(x).max(initial=0.0))):
            raise LPError(f"optimal point violates constraints by {viol:.3g}")
        return LPResult(OPTIMAL, x=x, value=float(c @ x), pivots=pivots)
