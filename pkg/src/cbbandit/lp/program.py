"""Dense linear programs and a two-phase primal simplex solver.

Programs are always maximizations over nonnegative variables.  The simplex
uses Bland's rule for both entering and leaving variables, so it cannot
cycle; it is meant for the small-to-medium dense programs built in this
package.  ``method="highs"`` routes the same program through scipy's HiGHS
for the larger occupancy programs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9

LE, EQ, GE = "<=", "==", ">="
_SENSES = (LE, EQ, GE)

# Programs with more variables than this go to HiGHS under method="auto".
AUTO_SIMPLEX_MAX_VARS = 160


class LinearProgram:
    """``maximize c @ x`` subject to row constraints and ``x >= 0``."""

    def __init__(self, objective):
        self.objective = np.asarray(objective, dtype=float).copy()
        self._rows: list[np.ndarray] = []
        self._senses: list[str] = []
        self._rhs: list[float] = []
        self.row_names: list[str] = []

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return len(self._rows)

    def add_row(self, coeffs, sense: str, rhs: float, name: str = "") -> int:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.n_vars,):
            raise ValueError(f"row width {coeffs.shape} != ({self.n_vars},)")
        if sense not in _SENSES:
            raise ValueError(f"unknown relation {sense!r}")
        if not (np.all(np.isfinite(coeffs)) and np.isfinite(rhs)):
            raise ValueError("constraint coefficients must be finite")
        self._rows.append(coeffs)
        self._senses.append(sense)
        self._rhs.append(float(rhs))
        self.row_names.append(name)
        return self.n_rows - 1

    def add_rows(self, block, sense: str, rhs, names=None) -> None:
        block = np.atleast_2d(np.asarray(block, dtype=float))
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (block.shape[0],))
        for j, (row, b) in enumerate(zip(block, rhs)):
            self.add_row(row, sense, b, names[j] if names is not None else "")

    def extend(self, n_new: int, objective=None) -> None:
        """Append ``n_new`` variables (zero in existing rows)."""
        obj = np.zeros(n_new) if objective is None else np.asarray(objective, dtype=float)
        self.objective = np.concatenate([self.objective, obj])
        self._rows = [np.concatenate([r, np.zeros(n_new)]) for r in self._rows]

    def copy(self) -> "LinearProgram":
        lp = LinearProgram(self.objective)
        lp._rows = [r.copy() for r in self._rows]
        lp._senses = list(self._senses)
        lp._rhs = list(self._rhs)
        lp.row_names = list(self.row_names)
        return lp

    def matrices(self):
        """Return ``(A, senses, b)`` with ``A`` of shape (n_rows, n_vars)."""
        if not self._rows:
            return np.zeros((0, self.n_vars)), np.array([], dtype=object), np.zeros(0)
        return np.vstack(self._rows), np.array(self._senses, dtype=object), np.array(self._rhs)

    def residuals(self, x) -> np.ndarray:
        """Constraint violation per row (0 when satisfied)."""
        A, senses, b = self.matrices()
        lhs = A @ x
        viol = np.zeros(len(b))
        viol[senses == LE] = np.maximum(lhs - b, 0)[senses == LE]
        viol[senses == GE] = np.maximum(b - lhs, 0)[senses == GE]
        viol[senses == EQ] = np.abs(lhs - b)[senses == EQ]
        return viol


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve_lp(lp: LinearProgram, method: str = "simplex") -> LPResult:
    """Solve ``lp``; ``method`` is "simplex", "highs" or "auto"."""
    if method == "auto":
        method = "simplex" if lp.n_vars <= AUTO_SIMPLEX_MAX_VARS else "highs"
    if method == "simplex":
        return _simplex(lp)
    if method == "highs":
        return _highs(lp)
    raise ValueError(f"unknown LP method {method!r}")


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    nz = np.flatnonzero(np.abs(col) > 0.0)
    if nz.size:
        T[nz] -= np.outer(col[nz], T[r])


def _run_bland(T: np.ndarray, basis: np.ndarray, allowed: np.ndarray, max_iter: int):
    """Minimize the objective in row -1 (stored as reduced costs); returns (status, iters)."""
    m = T.shape[0] - 1
    it = 0
    while True:
        reduced = T[-1, :-1]
        candidates = np.flatnonzero((reduced < -PIVOT_TOL) & allowed)
        if candidates.size == 0:
            return "optimal", it
        c = candidates[0]
        col = T[:m, c]
        pos = np.flatnonzero(col > PIVOT_TOL)
        if pos.size == 0:
            return "unbounded", it
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = ties[np.argmin(basis[ties])]
        _pivot(T, r, c)
        basis[r] = c
        it += 1
        if it >= max_iter:
            raise RuntimeError("simplex iteration limit reached")


def _simplex(lp: LinearProgram) -> LPResult:
    A, senses, b = lp.matrices()
    m, n = A.shape
    c = lp.objective
    if m == 0:
        if np.any(c > PIVOT_TOL):
            return LPResult("unbounded", None, np.inf)
        return LPResult("optimal", np.zeros(n), 0.0)

    A = A.copy()
    b = b.copy()
    senses = senses.copy()
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    flip = {LE: GE, GE: LE, EQ: EQ}
    senses[neg] = [flip[s] for s in senses[neg]]

    n_slack = int(np.sum(senses != EQ))
    n_art = int(np.sum(senses != LE))
    width = n + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    basis = np.empty(m, dtype=np.int64)
    art_cols = []
    js, ja = n, n + n_slack
    for r, s in enumerate(senses):
        if s == LE:
            T[r, js] = 1.0
            basis[r] = js
            js += 1
        elif s == GE:
            T[r, js] = -1.0
            js += 1
            T[r, ja] = 1.0
            basis[r] = ja
            art_cols.append(ja)
            ja += 1
        else:
            T[r, ja] = 1.0
            basis[r] = ja
            art_cols.append(ja)
            ja += 1

    max_iter = 50 * (m + width) + 1000
    iters = 0
    is_art = np.zeros(width, dtype=bool)
    is_art[art_cols] = True

    if art_cols:
        # phase 1: minimize the sum of artificials
        T[-1, :] = 0.0
        T[-1, art_cols] = 1.0
        for r in np.flatnonzero(is_art[basis]):
            T[-1] -= T[r]
        status, it = _run_bland(T, basis, np.ones(width, dtype=bool), max_iter)
        iters += it
        scale = max(1.0, float(np.abs(b).max()))
        if -T[-1, -1] > FEAS_TOL * scale * 10:
            return LPResult("infeasible", None, -np.inf, iters)
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if not is_art[basis[r]]:
                continue
            row = T[r, :width]
            cand = np.flatnonzero((np.abs(row) > PIVOT_TOL) & ~is_art)
            if cand.size:
                _pivot(T, r, cand[0])
                basis[r] = cand[0]
            else:
                keep[r] = False
        if not keep.all():
            T = np.vstack([T[:m][keep], T[-1:]])
            basis = basis[keep]
            m = basis.size

    # phase 2: minimize -c
    T[-1, :] = 0.0
    T[-1, :n] = -c
    for r in range(m):
        if T[-1, basis[r]] != 0.0:
            T[-1] -= T[-1, basis[r]] * T[r]
    status, it = _run_bland(T, basis, ~is_art, max_iter)
    iters += it
    if status == "unbounded":
        return LPResult("unbounded", None, np.inf, iters)
    x_full = np.zeros(width)
    x_full[basis] = T[:m, -1]
    x = np.maximum(x_full[:n], 0.0)
    return LPResult("optimal", x, float(c @ x), iters)


def _highs(lp: LinearProgram) -> LPResult:
    from scipy.optimize import linprog

    A, senses, b = lp.matrices()
    ub = senses != EQ
    A_ub = np.where((senses[ub] == GE)[:, None], -A[ub], A[ub])
    b_ub = np.where(senses[ub] == GE, -b[ub], b[ub])
    eq = senses == EQ
    res = linprog(
        -lp.objective,
        A_ub=A_ub if A_ub.size else None,
        b_ub=b_ub if A_ub.size else None,
        A_eq=A[eq] if eq.any() else None,
        b_eq=b[eq] if eq.any() else None,
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status == 2:
        return LPResult("infeasible", None, -np.inf)
    if res.status == 3:
        return LPResult("unbounded", None, np.inf)
    if res.status != 0:
        raise RuntimeError(f"HiGHS failed: {res.message}")
    x = np.maximum(res.x, 0.0)
    return LPResult("optimal", x, float(lp.objective @ x), int(getattr(res, "nit", 0)))
