"""Brute-force baselines for small instances.

Everything here re-derives solver outputs by exhaustive search so the two
can be compared: the aggregate requirement as a grid minimum of per-agent
requirement sums (with a Lipschitz modulus turning the grid value into a
certified bracket), Pareto optimality as the absence of a dominating grid
allocation, and subgradients against central differences.

Restricted to two agents and at most four scenarios; beyond that the
duality certificates in the solver modules are the intended evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import market
from .errors import DomainError, GridRefusal, StructuralError
from .regime import (
    AVAR,
    ENTROPIC,
    EXPECTATION,
    LawInvariantAcceptanceSet,
    PolyhedralAcceptanceSet,
    RiskValue,
    rho,
)
from .scenario import Functional, RandomVariable

__all__ = [
    "GridSpec",
    "BruteLambda",
    "ParetoCheck",
    "FdCheck",
    "brute_lambda",
    "verify_pareto",
    "fd_subgradient_check",
]

POINT_CAP = 10 ** 7
CHUNK = 200_000
WORSEN_TOL = 1e-9
KINK_TOL = 1e-3


@dataclass(frozen=True)
class GridSpec:
    """A monetary box with a common resolution: coordinate i sweeps
    lower[i], lower[i] + h, ... up to upper[i]."""

    lower: np.ndarray
    upper: np.ndarray
    h: float

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.ndim != 1 or hi.shape != lo.shape:
            raise StructuralError("grid bounds must be two aligned vectors")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise StructuralError("grid bounds must be finite")
        if np.any(hi < lo):
            raise StructuralError("grid upper bounds below lower bounds")
        if not self.h > 0:
            raise StructuralError("grid resolution must be positive")
        total = 1
        for c in self.counts:
            total *= c
            if total > POINT_CAP:
                raise GridRefusal(
                    f"grid would exceed {POINT_CAP:.0e} points; "
                    "coarsen h or shrink the box"
                )

    @property
    def counts(self) -> tuple:
        return tuple(
            int(math.floor((u - l) / self.h + 1e-9)) + 1
            for l, u in zip(self.lower, self.upper)
        )

    def axis(self, i: int) -> np.ndarray:
        return self.lower[i] + self.h * np.arange(self.counts[i])

    @classmethod
    def around(cls, X: RandomVariable, margin: float, h: float) -> "GridSpec":
        return cls(X.values - margin, X.values + margin, h)


# ----------------------------------------------------------------------
# per-agent requirement on batches of profiles
# ----------------------------------------------------------------------

def _cash_only(r):
    """Unit price when the market trades exactly one constant payoff."""
    if r.market.dim != 1:
        return None
    vals = r.market.basis[0].values
    if abs(vals.max() - vals.min()) > 1e-12 * max(1.0, abs(vals.max())):
        return None
    if abs(vals[0]) < 1e-12:
        return None
    unit_price = r.market.prices[0] / vals[0]
    return unit_price if unit_price > 0 else None


def _batch_requirement(r, rows: np.ndarray) -> np.ndarray:
    """rho_i over a batch (one profile per row).  Cash-only law-invariant
    regimes evaluate in closed form; everything else solves per row."""
    if isinstance(r.acceptance, LawInvariantAcceptanceSet):
        unit_price = _cash_only(r)
        if unit_price is not None:
            acc = r.acceptance
            probs = r.space.probs
            if acc.kind == ENTROPIC:
                a = acc.param
                xi = logsumexp(a * rows + np.log(probs), axis=1) / a
            elif acc.kind == EXPECTATION:
                xi = rows @ probs
            else:
                xi = _batch_avar(acc.param, probs, rows)
            return unit_price * xi
    out = np.empty(rows.shape[0])
    for k in range(rows.shape[0]):
        v = rho(r, RandomVariable(r.space, rows[k])).value
        out[k] = v.as_float() if v.is_finite else math.inf
    return out


def _batch_avar(beta: float, probs: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Tail expectation above the beta-quantile, row by row: the quantile
    keeps total mass 1 - beta in the tail, fractionally at the boundary."""
    order = np.argsort(rows, axis=1)[:, ::-1]
    vals = np.take_along_axis(rows, order, axis=1)
    p = probs[order]
    tail = 1.0 - beta
    cum = np.cumsum(p, axis=1)
    weight = np.minimum(p, np.maximum(tail - (cum - p), 0.0))
    return (weight * vals).sum(axis=1) / tail


# ----------------------------------------------------------------------
# the grid itself
# ----------------------------------------------------------------------

def _two_agents(s):
    if len(s.regimes) != 2:
        raise StructuralError("brute-force baselines cover two agents only")
    if s.space.size > 4:
        raise StructuralError("brute-force baselines cover <= 4 scenarios")
    return s.regimes


def _forced_first_part(s, X):
    """Support membership pins every coordinate outside the overlap: the
    first agent owns what the second cannot hold and vice versa.  Returns
    (template row, free coordinate indices) or None when some loss falls
    outside both supports."""
    r1, r2 = s.regimes
    in1, in2 = r1.support.included, r2.support.included
    x1 = np.zeros(s.space.size)
    free = []
    for w in range(s.space.size):
        if in1[w] and in2[w]:
            free.append(w)
        elif in1[w]:
            x1[w] = X.values[w]
        elif not in2[w] and X.values[w] != 0.0:
            return None
    return x1, free


def _grid_chunks(g, template, free):
    axes = [g.axis(w) for w in free]
    mesh = np.meshgrid(*axes, indexing="ij") if axes else []
    flat = [m.reshape(-1) for m in mesh]
    total = flat[0].size if flat else 1
    for start in range(0, total, CHUNK):
        stop = min(start + CHUNK, total)
        rows = np.tile(template, (stop - start, 1))
        for j, w in enumerate(free):
            rows[:, w] = flat[j][start:stop]
        yield rows


def _lipschitz(r) -> float:
    """Sup-norm Lipschitz constant of the agent's requirement: the total
    dual mass the acceptance functionals can exert (polyhedral), or the
    price of cash (law-invariant with a traded unit)."""
    if isinstance(r.acceptance, PolyhedralAcceptanceSet):
        return float(np.abs(r.acceptance.weight_matrix()).sum())
    u = r.market.coefficients_of(np.ones(r.space.size))
    if u is None:
        raise StructuralError(
            "Lipschitz modulus needs the unit payoff in the market span"
        )
    return abs(r.market.price(u))


@dataclass
class BruteLambda:
    estimate: RiskValue
    modulus: float                   # grid-to-optimum error allowance
    lipschitz: tuple
    points: int
    best_allocation: market.Allocation = None

    def bracket(self) -> tuple:
        v = self.estimate.as_float()
        return (v - self.modulus, v)


def brute_lambda(s: market.AgentSystem, X: RandomVariable,
                 g: GridSpec) -> BruteLambda:
    """Exhaustive two-agent requirement: sweep the overlap coordinates of
    the first part over the grid, charge each agent its own requirement,
    and keep the minimum.  Every grid point is a feasible decomposition,
    so the estimate is an upper bound; the Lipschitz modulus extends it
    to the bracket [estimate - modulus, estimate] whenever the box holds
    an optimal first part."""
    r1, r2 = _two_agents(s)
    if X.space.labels != s.space.labels:
        raise StructuralError("loss profile on a different scenario space")
    if g.lower.shape[0] != s.space.size:
        raise StructuralError("grid bounds must cover every scenario")
    L = (_lipschitz(r1), _lipschitz(r2))
    modulus = sum(L) * g.h / 2.0

    forced = _forced_first_part(s, X)
    if forced is None:
        return BruteLambda(RiskValue.infinite(), modulus, L, 0)
    template, free = forced

    best = math.inf
    best_row = None
    points = 0
    for rows in _grid_chunks(g, template, free):
        risks = (_batch_requirement(r1, rows)
                 + _batch_requirement(r2, X.values[None, :] - rows))
        points += rows.shape[0]
        k = int(np.argmin(risks))
        if risks[k] < best:
            best = float(risks[k])
            best_row = rows[k].copy()
    if not math.isfinite(best):
        return BruteLambda(RiskValue.infinite(), modulus, L, points)
    alloc = market.Allocation((
        RandomVariable(s.space, best_row),
        RandomVariable(s.space, X.values - best_row),
    ))
    return BruteLambda(RiskValue.finite(best), modulus, L, points, alloc)


# ----------------------------------------------------------------------
# Pareto domination sweep
# ----------------------------------------------------------------------

@dataclass
class ParetoCheck:
    pareto: bool
    base_risks: tuple
    modulus: float
    witness: market.Allocation = None
    witness_risks: tuple = None


def verify_pareto(s: market.AgentSystem, X: RandomVariable,
                  alloc: market.Allocation, g: GridSpec) -> ParetoCheck:
    """Search the grid for an allocation that improves one agent by more
    than the modulus without worsening the other.  Finding none certifies
    Pareto optimality at the grid's resolution; a find is returned as an
    explicit dominating witness."""
    r1, r2 = _two_agents(s)
    if np.max(np.abs(alloc.total() - X.values)) > 1e-9:
        raise StructuralError("allocation does not sum to the loss profile")
    L = (_lipschitz(r1), _lipschitz(r2))
    modulus = sum(L) * g.h / 2.0
    base = []
    for r, part in zip(s.regimes, alloc.parts):
        try:
            v = rho(r, part).value
        except DomainError:
            v = RiskValue.infinite()
        base.append(v.as_float() if v.is_finite else math.inf)

    forced = _forced_first_part(s, X)
    if forced is None:
        return ParetoCheck(True, tuple(base), modulus)
    template, free = forced

    for rows in _grid_chunks(g, template, free):
        u = _batch_requirement(r1, rows)
        v = _batch_requirement(r2, X.values[None, :] - rows)
        no_worse = (u <= base[0] + WORSEN_TOL) & (v <= base[1] + WORSEN_TOL)
        better = (base[0] - u > modulus) | (base[1] - v > modulus)
        hits = np.flatnonzero(no_worse & better)
        if hits.size:
            k = int(hits[0])
            witness = market.Allocation((
                RandomVariable(s.space, rows[k].copy()),
                RandomVariable(s.space, X.values - rows[k]),
            ))
            return ParetoCheck(False, tuple(base), modulus, witness,
                               (float(u[k]), float(v[k])))
    return ParetoCheck(True, tuple(base), modulus)


# ----------------------------------------------------------------------
# finite-difference subgradient check
# ----------------------------------------------------------------------

@dataclass
class FdCheck:
    mode: str                        # "smooth" | "kink"
    passed: bool
    max_relative_error: float = math.nan
    min_inequality_gap: float = math.nan
    kink_coords: tuple = ()


def _lam(s, values) -> float:
    v = market.capital_requirement(
        s, RandomVariable(s.space, values), certify=False).value
    return v.as_float() if v.is_finite else math.inf


def fd_subgradient_check(s: market.AgentSystem, X: RandomVariable,
                         phi: Functional, delta: float = 1e-5) -> FdCheck:
    """Central differences of the requirement against phi's weights.  A
    jump between one-sided slopes marks a kink; there the derivative is
    meaningless and the check falls back to the subgradient inequality
    on a deterministic sample of nearby profiles."""
    base = _lam(s, X.values)
    if not math.isfinite(base):
        raise DomainError("requirement infinite at the expansion point")
    m = s.space.size
    fwd = np.empty(m)
    bwd = np.empty(m)
    for w in range(m):
        up, dn = X.values.copy(), X.values.copy()
        up[w] += delta
        dn[w] -= delta
        lu, ld = _lam(s, up), _lam(s, dn)
        if not (math.isfinite(lu) and math.isfinite(ld)):
            raise DomainError(
                "requirement infinite next to the expansion point; no "
                "coordinate neighborhood to difference over"
            )
        fwd[w] = (lu - base) / delta
        bwd[w] = (base - ld) / delta

    scale = 1.0 + np.maximum(np.abs(fwd), np.abs(bwd))
    kinks = tuple(np.flatnonzero(np.abs(fwd - bwd) > KINK_TOL * scale))
    if not kinks:
        central = 0.5 * (fwd + bwd)
        err = np.abs(central - phi.weights) / np.maximum(
            1.0, np.abs(phi.weights))
        worst = float(np.max(err))
        return FdCheck("smooth", worst <= 1e-4, max_relative_error=worst)

    gap = math.inf
    for w in range(m):
        for step in (0.01, 0.1, 1.0):
            for sign in (+1.0, -1.0):
                y = X.values.copy()
                y[w] += sign * step
                ly = _lam(s, y)
                if math.isfinite(ly):
                    gap = min(gap, ly - base
                              - float(phi.weights @ (y - X.values)))
    return FdCheck("kink", gap >= -1e-8, min_inequality_gap=gap,
                   kink_coords=kinks)
