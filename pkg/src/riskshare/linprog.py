"""Dense two-phase simplex solver with deterministic pivoting.

This is the computational backbone for every polyhedral evaluation in the
package: risk measures, shared capital requirements, no-arbitrage probes,
scalability detection, and subgradient extraction all reduce to small dense
linear programs solved here.

Conventions
-----------
* Problems are stated as  minimize c.x  subject to  rows {<=,=,>=} rhs  and
  per-variable bounds (either side possibly infinite).
* Reported duals are shadow prices: one multiplier per constraint row equal
  to the derivative of the optimal value with respect to that row's
  right-hand side (so the dual of an equality row can take either sign,
  '<=' rows have non-positive duals and '>=' rows non-negative ones in a
  minimization).
* Pivot choice is largest-coefficient with first-index tie-breaking; after
  a run of degenerate pivots the solver switches to Bland's rule, which
  guarantees termination.  Identical inputs therefore produce bitwise
  identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalFailure, StructuralError

__all__ = ["LpProblem", "LpSolution", "solve", "null_space"]

# ----------------------------------------------------------------------
# tolerances (relative use documented at each site)
# ----------------------------------------------------------------------
FEAS_TOL = 1e-9          # feasibility decisions
OPT_TOL = 1e-9           # reduced-cost optimality threshold
PIVOT_TOL = 1e-9         # smallest acceptable pivot magnitude
RANK_TOL = 1e-10         # rank decisions, relative to row norms
CERT_TOL = 1e-8          # certificate residuals promised to callers
DEGENERATE_RUN = 12      # consecutive degenerate pivots before Bland's rule

LE, EQ, GE = "<=", "=", ">="


@dataclass
class LpProblem:
    """minimize c.x  s.t.  rows[i] . x  (senses[i])  rhs[i],  lower <= x <= upper."""

    c: np.ndarray
    rows: np.ndarray
    senses: list
    rhs: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.shape[0]
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.senses = list(self.senses)
        m = self.rows.shape[0]
        if self.rhs.shape != (m,) or len(self.senses) != m:
            raise StructuralError("constraint rows, senses and rhs must align")
        if not np.all(np.isfinite(self.rhs)):
            raise StructuralError("right-hand sides must be finite")
        for s in self.senses:
            if s not in (LE, EQ, GE):
                raise StructuralError(f"unknown row sense {s!r}")
        if self.lower is None:
            self.lower = np.zeros(n)
        else:
            self.lower = np.asarray(self.lower, dtype=float)
        if self.upper is None:
            self.upper = np.full(n, math.inf)
        else:
            self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise StructuralError("bounds must match the number of variables")


@dataclass
class LpSolution:
    status: str                      # "optimal" | "unbounded" | "infeasible"
    primal: np.ndarray = None
    duals: np.ndarray = None         # one shadow price per original row
    objective_value: float = math.nan
    ray: np.ndarray = None           # feasible ray when unbounded
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    degenerate: bool = False         # optimal basis has a zero basic value
                                     # (the dual solution may be non-unique)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ======================================================================
# standardization:  x = shift + M y,  y >= 0;  rows -> equalities
# ======================================================================

def _expand_variables(p: LpProblem):
    n = p.c.shape[0]
    shift = np.zeros(n)
    cols = []                # (var index, sign)
    extra_rows = []          # (y column, upper value) for doubly bounded vars
    for j in range(n):
        lo, hi = p.lower[j], p.upper[j]
        if lo > hi + FEAS_TOL:
            return None
        if math.isfinite(lo):
            shift[j] = lo
            cols.append((j, +1.0))
            if math.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif math.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, +1.0))
            cols.append((j, -1.0))
    M = np.zeros((n, len(cols)))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s
    return shift, M, extra_rows


def _standardize(p: LpProblem):
    """Return (A, b, c, flips, n_y, M, shift, const, n_orig_rows) with
    A y = b, y >= 0, b >= 0, objective c.y + const."""
    expanded = _expand_variables(p)
    if expanded is None:
        return None
    shift, M, extra_rows = expanded
    n_y = M.shape[1]

    A_rows = []
    b_list = []
    senses = []
    A_main = p.rows @ M
    b_main = p.rhs - p.rows @ shift
    for i in range(p.rows.shape[0]):
        A_rows.append(A_main[i])
        b_list.append(b_main[i])
        senses.append(p.senses[i])
    for (k, ub) in extra_rows:
        r = np.zeros(n_y)
        r[k] = 1.0
        A_rows.append(r)
        b_list.append(ub)
        senses.append(LE)

    m = len(A_rows)
    n_slack = sum(1 for s in senses if s != EQ)
    A = np.zeros((m, n_y + n_slack))
    b = np.zeros(m)
    flips = np.ones(m)
    sl = n_y
    slack_col = [-1] * m
    for i in range(m):
        A[i, :n_y] = A_rows[i]
        b[i] = b_list[i]
        if senses[i] == LE:
            A[i, sl] = 1.0
            slack_col[i] = sl
            sl += 1
        elif senses[i] == GE:
            A[i, sl] = -1.0
            slack_col[i] = sl
            sl += 1
        if b[i] < 0:
            A[i] *= -1.0
            b[i] *= -1.0
            flips[i] = -1.0
    c = np.zeros(n_y + n_slack)
    c[:n_y] = p.c @ M
    const = float(p.c @ shift)
    return A, b, c, flips, n_y, M, shift, const, p.rows.shape[0], slack_col


# ======================================================================
# tableau simplex
# ======================================================================

def _pivot(T: np.ndarray, i: int, j: int):
    piv_row = T[i] / T[i, j]
    T -= np.outer(T[:, j], piv_row)
    T[i] = piv_row


def _run_simplex(T, basis, allowed, cap, it0=0):
    """Iterate on tableau T (cost row last, rhs column last) until optimal
    or unbounded.  `allowed` masks columns eligible to enter (used to lock
    out artificials in phase 2).  Returns (status, entering_or_None, iters)."""
    m = T.shape[0] - 1
    bland = False
    degen_run = 0
    it = it0
    while True:
        it += 1
        if it > cap:
            raise NumericalFailure(
                f"simplex iteration cap {cap} exceeded (anti-cycling active: {bland})"
            )
        cost = np.where(allowed[:-1], T[-1, :-1], np.inf)
        if bland:
            negs = np.nonzero(cost < -OPT_TOL)[0]
            if negs.size == 0:
                return "optimal", None, it
            j = int(negs[0])
        else:
            j = int(np.argmin(cost))
            if cost[j] >= -OPT_TOL:
                return "optimal", None, it
        col = T[:-1, j]
        pos = col > PIVOT_TOL
        if not pos.any():
            return "unbounded", j, it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:-1, -1][pos] / col[pos]
        rmin = ratios.min()
        ties = np.nonzero(ratios <= rmin + 1e-12)[0]
        if bland:
            i = int(ties[np.argmin(np.asarray(basis)[ties])])
        else:
            i = int(ties[0])
        if T[i, -1] <= 1e-11:
            degen_run += 1
            if degen_run > DEGENERATE_RUN:
                bland = True
        else:
            degen_run = 0
        _pivot(T, i, j)
        basis[i] = j


def solve(p: LpProblem, max_iterations: int = None) -> LpSolution:
    """Two-phase simplex.  Deterministic; raises NumericalFailure rather
    than returning an uncertified answer."""
    std = _standardize(p)
    if std is None:
        return LpSolution(status="infeasible", objective_value=math.inf)
    A, b, c, flips, n_y, M, shift, const, n_orig, slack_col = std
    m, N = A.shape
    cap = max_iterations or (2000 + 200 * (m + N))

    # ---------------- phase 1 ----------------
    basis = [-1] * m
    art_cols = []
    for i in range(m):
        sc = slack_col[i] if i < len(slack_col) else -1
        if sc >= 0 and A[i, sc] > 0.5:       # +1 slack survives the flip
            basis[i] = sc
        else:
            art_cols.append(i)
    n_art = len(art_cols)
    T = np.zeros((m + 1, N + n_art + 1))
    T[:m, :N] = A
    T[:m, -1] = b
    for k, i in enumerate(art_cols):
        T[i, N + k] = 1.0
        basis[i] = N + k
    # phase-1 cost: sum of artificials, canonicalized
    T[-1, N:N + n_art] = 1.0
    for i in art_cols:
        T[-1] -= T[i]
    allowed = np.ones(T.shape[1], dtype=bool)
    status, _, iters = _run_simplex(T, basis, allowed, cap)
    phase1_obj = -T[-1, -1]
    if phase1_obj > 1e-7:
        return LpSolution(status="infeasible", objective_value=math.inf,
                          iterations=iters)

    # drive leftover artificials out of the basis
    drop_rows = []
    for i in range(m):
        if basis[i] >= N:
            row = T[i, :N]
            nz = np.nonzero(np.abs(row) > PIVOT_TOL)[0]
            if nz.size == 0:
                drop_rows.append(i)          # redundant constraint
            else:
                _pivot(T, i, int(nz[0]))
                basis[i] = int(nz[0])
    if drop_rows:
        keep = [i for i in range(m) if i not in drop_rows]
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[i] for i in keep]
        row_map = keep
        m = len(keep)
    else:
        row_map = list(range(m))

    # ---------------- phase 2 ----------------
    T2 = np.hstack([T[:, :N], T[:, -1:]])
    T2[-1, :] = 0.0
    T2[-1, :N] = c
    for i in range(m):
        T2[-1] -= T2[-1, basis[i]] * T2[i]
    allowed = np.ones(N + 1, dtype=bool)
    status, entering, iters = _run_simplex(T2, basis, allowed, cap, it0=iters)

    if status == "unbounded":
        d = np.zeros(N)
        d[entering] = 1.0
        for i in range(m):
            d[basis[i]] = max(0.0, -T2[i, entering])
        ray = M @ d[:n_y]
        return LpSolution(status="unbounded", objective_value=-math.inf,
                          ray=ray, iterations=iters)

    y_std = np.zeros(N)
    for i in range(m):
        y_std[basis[i]] = T2[i, -1]
    x = shift + M @ y_std[:n_y]
    obj = float(c @ y_std) + const

    duals = _recover_duals(A, b, c, basis, row_map, flips, n_orig, m)
    degen = bool(m and float(np.min(T2[:m, -1])) <= 1e-11)
    sol = LpSolution(status="optimal", primal=x, duals=duals,
                     objective_value=obj, iterations=iters, degenerate=degen)
    _certify(p, sol)
    return sol


def _recover_duals(A, b, c, basis, row_map, flips, n_orig, m):
    """Solve B^T y = c_B on the kept rows; dropped (redundant) rows get 0."""
    if m == 0:
        return np.zeros(n_orig)
    B = A[np.ix_(row_map, basis)]
    cB = c[basis]
    try:
        y = np.linalg.solve(B.T, cB)
    except np.linalg.LinAlgError:
        y, *_ = np.linalg.lstsq(B.T, cB, rcond=None)
    duals = np.zeros(n_orig)
    for k, i in enumerate(row_map):
        if i < n_orig:
            duals[i] = flips[i] * y[k]
    return duals


def _certify(p: LpProblem, sol: LpSolution):
    """Check the optimality certificates promised by the solution type:
    primal feasibility, complementary slackness, and zero duality gap,
    all within 1e-8 (relative to the instance scale)."""
    x = sol.primal
    scale = 1.0 + max(
        float(np.max(np.abs(p.rhs), initial=0.0)),
        float(np.max(np.abs(x), initial=0.0)),
        abs(sol.objective_value),
    )
    feas = 0.0
    comp = 0.0
    dual_obj = 0.0
    if p.rows.shape[0]:
        ax = p.rows @ x
        for i, s in enumerate(p.senses):
            gap = ax[i] - p.rhs[i]
            if s == LE:
                feas = max(feas, gap)
            elif s == GE:
                feas = max(feas, -gap)
            else:
                feas = max(feas, abs(gap))
            comp = max(comp, abs(sol.duals[i] * gap))
            dual_obj += sol.duals[i] * p.rhs[i]
    lo_v = np.where(np.isfinite(p.lower), p.lower, x)
    hi_v = np.where(np.isfinite(p.upper), p.upper, x)
    feas = max(feas, float(np.max(lo_v - x, initial=0.0)))
    feas = max(feas, float(np.max(x - hi_v, initial=0.0)))
    # reduced costs at the bounds close the duality gap
    red = p.c - (p.rows.T @ sol.duals if p.rows.shape[0] else 0.0)
    at = np.where(np.isfinite(p.lower) & (np.abs(x - p.lower) <= 1e-7), p.lower, 0.0)
    at = np.where(np.isfinite(p.upper) & (np.abs(x - p.upper) <= 1e-7), p.upper, at)
    dual_obj += float(red @ np.where(np.abs(red) > 1e-9, at, 0.0))
    gap = abs(dual_obj - sol.objective_value)
    sol.residuals = {"feasibility": feas, "complementarity": comp,
                     "duality_gap": gap}
    if feas > CERT_TOL * scale or gap > CERT_TOL * scale * 10:
        raise NumericalFailure(
            f"lost optimality certificate: feasibility {feas:.2e}, gap {gap:.2e}"
        )


# ======================================================================
# null spaces
# ======================================================================

def null_space(A) -> np.ndarray:
    """Orthonormal basis (columns) of {v : A v = 0}.

    Rank decisions at 1e-10 relative to the matrix scale.  Columns are
    sign-canonicalized (first entry of largest magnitude made positive)
    so repeated calls are deterministic.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0 or A.shape[0] == 0:
        k = A.shape[1] if A.ndim == 2 else 0
        return np.eye(k)
    ns = scipy.linalg.null_space(A, rcond=RANK_TOL)
    for j in range(ns.shape[1]):
        col = ns[:, j]
        lead = int(np.argmax(np.abs(col)))
        if col[lead] < 0:
            ns[:, j] = -col
    return ns
