"""Agent systems and the market-level risk sharing machinery.

An agent system is an ordered family of risk measurement regimes on one
scenario space whose markets price shared securities consistently.  It
induces a representative agent: the aggregate acceptance set (Minkowski
sum), the aggregate security space  M = S_1 + ... + S_n  with the glued
price functional pi, and the sharing functional

    Lambda(X) = inf { sum_i rho_i(X_i) : X_1 + ... + X_n = X,
                      X_i in agent i's support ideal }.

Lambda is finite and exact (the infimum is attained by an allocation whose
risks sum to it) exactly in the no-scalable-arbitrage case pi(0) = 0; the
dichotomy pi(0) in {0, -inf} is decided by a rank computation with an LP
cross-check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import linprog
from .errors import (
    DomainError,
    InternalInconsistency,
    NumericalFailure,
    StructuralError,
)
from .regime import (
    LawInvariantAcceptanceSet,
    PolyhedralAcceptanceSet,
    RiskMeasurementRegime,
    RiskValue,
    ValidationReport,
    rho,
)
from .scenario import Functional, RandomVariable, ScenarioSpace

__all__ = [
    "AgentSystem",
    "Allocation",
    "SharingResult",
    "NsaResult",
    "validate_star",
    "nsa_check",
    "capital_requirement",
    "capital_requirement_payoff_form",
    "pareto_from_payoff",
    "security_selection",
    "selection_blocks",
    "shift_allocation",
    "recession_data",
    "level_set_certificate",
]

SPAN_TOL = 1e-10


@dataclass(frozen=True)
class AgentSystem:
    """n >= 2 regimes on a common scenario space."""

    regimes: tuple

    def __post_init__(self):
        regimes = tuple(self.regimes)
        object.__setattr__(self, "regimes", regimes)
        if len(regimes) < 2:
            raise StructuralError("agent system needs at least two agents")
        space = regimes[0].space
        for r in regimes[1:]:
            if r.space.labels != space.labels or not np.array_equal(
                r.space.probs, space.probs
            ):
                raise StructuralError("agents live on different scenario spaces")
        cover = np.zeros(space.size, dtype=bool)
        for r in regimes:
            cover |= r.support.included
        if not cover.all():
            raise StructuralError(
                "agent supports must jointly cover the scenario space"
            )

    @property
    def space(self) -> ScenarioSpace:
        return self.regimes[0].space

    @property
    def n(self) -> int:
        return len(self.regimes)

    @property
    def is_law_invariant(self) -> bool:
        return all(r.is_law_invariant for r in self.regimes)

    # ---- aggregate security space --------------------------------------

    def stacked_basis(self):
        """(B, prices, slices): B has one column per basis payoff of every
        agent in order; slices[i] selects agent i's columns."""
        cols, prices, slices = [], [], []
        start = 0
        for r in self.regimes:
            B = r.market.basis_matrix()
            cols.append(B)
            prices.append(r.market.prices)
            slices.append(slice(start, start + B.shape[1]))
            start += B.shape[1]
        return np.hstack(cols), np.concatenate(prices), slices

    def aggregate_contains(self, values: np.ndarray, tol: float = SPAN_TOL):
        """Coefficients of `values` over the stacked basis (least squares),
        or None if it lies outside the aggregate span."""
        B, _, _ = self.stacked_basis()
        w, *_ = np.linalg.lstsq(B, values, rcond=None)
        if np.max(np.abs(B @ w - values)) > tol * max(1.0, np.abs(values).max()):
            return None
        return w

    def pi(self, values: np.ndarray) -> float:
        """Glued price of an aggregate-span payoff.  Well-defined (the same
        for every decomposition) when pi(0) = 0; guarded by nsa_check."""
        res = nsa_check(self)
        if not res.pi_zero_is_zero:
            raise DomainError(
                "pi(0) = -inf for this system; prices of aggregate payoffs "
                "are not well-defined"
            )
        w = self.aggregate_contains(values)
        if w is None:
            raise DomainError("payoff lies outside the aggregate security span")
        _, prices, _ = self.stacked_basis()
        return float(prices @ w)


@dataclass(frozen=True)
class Allocation:
    """One loss profile per agent, each inside that agent's support ideal."""

    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    def total(self) -> np.ndarray:
        return np.sum([p.values for p in self.parts], axis=0)

    def __iter__(self):
        return iter(self.parts)

    def __len__(self):
        return len(self.parts)


# ----------------------------------------------------------------------
# (★): price agreement on intersections + connectivity
# ----------------------------------------------------------------------

def pair_intersection(s: AgentSystem, i: int, j: int):
    """Basis of S_i ∩ S_j as payoff columns, with the coefficient
    representations (u over S_i's basis, v over S_j's)."""
    Bi = s.regimes[i].market.basis_matrix()
    Bj = s.regimes[j].market.basis_matrix()
    ns = linprog.null_space(np.hstack([Bi, -Bj]))
    ki = Bi.shape[1]
    vectors, us, vs = [], [], []
    for col in range(ns.shape[1]):
        u, v = ns[:ki, col], ns[ki:, col]
        z = Bi @ u
        if np.max(np.abs(z)) > SPAN_TOL:
            vectors.append(z)
            us.append(u)
            vs.append(v)
    return vectors, us, vs


def validate_star(s: AgentSystem) -> ValidationReport:
    """Check price agreement on pairwise security-span intersections and
    connectivity of the nontrivial-price relation graph."""
    rep = ValidationReport()
    n = s.n
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    worst = 0.0
    edges = []
    for i, j in itertools.combinations(range(n), 2):
        vectors, us, vs = pair_intersection(s, i, j)
        nontrivial_price = False
        for z, u, v in zip(vectors, us, vs):
            pi_ = s.regimes[i].market.price(u)
            pj_ = s.regimes[j].market.price(v)
            scale = max(1.0, abs(pi_), abs(pj_))
            worst = max(worst, abs(pi_ - pj_) / scale)
            if abs(pi_) > 1e-10:
                nontrivial_price = True
        if vectors and nontrivial_price:
            edges.append((i, j))
            parent[find(i)] = find(j)
    connected = len({find(a) for a in range(n)}) == 1
    rep.add("price_agreement_on_intersections", worst <= 1e-10,
            f"max relative price disagreement = {worst:.2e}")
    rep.add("relation_graph_connected", connected,
            f"edges: {edges}")
    return rep


# ----------------------------------------------------------------------
# the pi(0) dichotomy
# ----------------------------------------------------------------------

@dataclass
class NsaResult:
    dim_v: int
    n_agents: int
    lp_status: str

    @property
    def pi_zero_is_zero(self) -> bool:
        return self.dim_v < self.n_agents

    def verdict(self) -> str:
        return "pi(0)=0" if self.pi_zero_is_zero else "pi(0)=-inf"


def nsa_check(s: AgentSystem) -> NsaResult:
    """Decide the dichotomy: pi(0) = 0 iff the set of per-agent price
    vectors of zero-sum security allocations has dimension < n.

    The dimension comes from a null-space computation; an LP (minimize the
    total price of a zero-sum security allocation) cross-checks it:
    unbounded iff the dimension equals n.  Disagreement raises
    InternalInconsistency.
    """
    cached = getattr(s, "_nsa_result", None)
    if cached is not None:
        return cached
    B, prices, slices = s.stacked_basis()
    ns = linprog.null_space(B)
    if ns.shape[1] == 0:
        V = np.zeros((s.n, 0))
    else:
        V = np.array([
            [float(prices[sl] @ ns[sl, c]) for c in range(ns.shape[1])]
            for sl in slices
        ])
    dim_v = int(np.linalg.matrix_rank(V, tol=1e-10 * max(1.0, np.abs(V).max() if V.size else 1.0)))

    k = B.shape[1]
    sol = linprog.solve(linprog.LpProblem(
        c=prices.copy(), rows=B, senses=[linprog.EQ] * B.shape[0],
        rhs=np.zeros(B.shape[0]),
        lower=np.full(k, -math.inf), upper=np.full(k, math.inf)))
    unbounded = sol.status == "unbounded"
    if unbounded != (dim_v == s.n):
        raise InternalInconsistency(
            f"rank computation says dim(V) = {dim_v} of n = {s.n} but the "
            f"zero-sum price LP is {sol.status}"
        )
    res = NsaResult(dim_v=dim_v, n_agents=s.n, lp_status=sol.status)
    object.__setattr__(s, "_nsa_result", res)
    return res


def _ensure_shareable(s: AgentSystem):
    if not nsa_check(s).pi_zero_is_zero:
        raise DomainError(
            "system admits scalable arbitrage (pi(0) = -inf); the sharing "
            "functional is identically -inf"
        )


# ----------------------------------------------------------------------
# Lambda
# ----------------------------------------------------------------------

@dataclass
class SharingResult:
    value: RiskValue
    allocation: Allocation = None
    payoff: RandomVariable = None          # an optimal aggregate payoff
    subgradient: Functional = None         # from the LP duals (polyhedral)
    agent_risks: list = None               # certified per-part risks
    method: str = "joint_lp"
    dual_degenerate: bool = False          # subgradient may be non-unique


def capital_requirement(s: AgentSystem, X: RandomVariable,
                        certify: bool = True) -> SharingResult:
    """Lambda(X) with a Pareto-optimal allocation and an optimal payoff.

    Polyhedral systems solve one joint LP; fully law-invariant systems
    route through the law-invariant machinery.
    """
    if X.space.labels != s.space.labels:
        raise StructuralError("loss profile on a different scenario space")
    _ensure_shareable(s)
    if s.is_law_invariant:
        from . import lawinv
        return lawinv.law_invariant_sharing(s, X)
    if not all(isinstance(r.acceptance, PolyhedralAcceptanceSet)
               for r in s.regimes):
        raise DomainError(
            "mixed polyhedral / law-invariant systems are not supported; "
            "systems must be uniformly one or the other"
        )
    return _capital_requirement_lp(s, X, certify)


def _capital_requirement_lp(s, X, certify) -> SharingResult:
    space = s.space
    m = space.size
    # variables: per agent, X_i on its included coords then z_i coefficients
    offsets = []
    widths = []
    pos = 0
    for r in s.regimes:
        ni = r.support.dim
        ki = r.market.dim
        offsets.append(pos)
        widths.append((ni, ki))
        pos += ni + ki
    ntot = pos

    c = np.zeros(ntot)
    rows = []
    senses = []
    rhs = []
    for idx, r in enumerate(s.regimes):
        ni, ki = widths[idx]
        o = offsets[idx]
        c[o + ni:o + ni + ki] = r.market.prices
        W = r.acceptance.weight_matrix()
        inc = r.support.included
        WB = W @ r.market.basis_matrix()
        for jrow in range(W.shape[0]):
            row = np.zeros(ntot)
            row[o:o + ni] = W[jrow, inc]
            row[o + ni:o + ni + ki] = -WB[jrow]
            rows.append(row)
            senses.append(linprog.LE)
            rhs.append(r.acceptance.bounds[jrow])
    # aggregate rows, one per scenario
    for w in range(m):
        row = np.zeros(ntot)
        for idx, r in enumerate(s.regimes):
            inc = r.support.included
            if inc[w]:
                local = int(np.nonzero(np.nonzero(inc)[0] == w)[0][0])
                row[offsets[idx] + local] = 1.0
        rows.append(row)
        senses.append(linprog.EQ)
        rhs.append(X.values[w])

    sol = linprog.solve(linprog.LpProblem(
        c=c, rows=np.array(rows), senses=senses, rhs=np.array(rhs),
        lower=np.full(ntot, -math.inf), upper=np.full(ntot, math.inf)))

    if sol.status == "infeasible":
        return SharingResult(value=RiskValue.infinite())
    if sol.status == "unbounded":
        raise InternalInconsistency(
            "sharing LP unbounded although pi(0) = 0; the input system "
            "violates the no-arbitrage contract"
        )

    parts = []
    payoff_vals = np.zeros(m)
    for idx, r in enumerate(s.regimes):
        ni, ki = widths[idx]
        o = offsets[idx]
        xv = np.zeros(m)
        xv[r.support.included] = sol.primal[o:o + ni]
        parts.append(RandomVariable(space, xv))
        payoff_vals += r.market.basis_matrix() @ sol.primal[o + ni:o + ni + ki]
    alloc = Allocation(tuple(parts))
    resid = float(np.max(np.abs(alloc.total() - X.values)))
    if resid > 1e-9:
        raise InternalInconsistency(f"allocation sums off by {resid:.2e}")

    duals = sol.duals[-m:]
    subgrad = Functional(space, duals / space.probs)

    agent_risks = None
    if certify:
        agent_risks = [rho(r, p).value for r, p in zip(s.regimes, alloc.parts)]
        total = sum(v.as_float() for v in agent_risks)
        if abs(total - sol.objective_value) > 1e-8 * (1 + abs(total)):
            raise InternalInconsistency(
                f"sum of certified agent risks {total} != LP value "
                f"{sol.objective_value}"
            )
    return SharingResult(
        value=RiskValue.finite(sol.objective_value),
        allocation=alloc,
        payoff=RandomVariable(space, payoff_vals),
        subgradient=subgrad,
        agent_risks=agent_risks,
        dual_degenerate=sol.degenerate,
    )


def capital_requirement_payoff_form(s: AgentSystem, X: RandomVariable) -> RiskValue:
    """inf { pi(Z) : Z in M, X - Z in A_+ }: the representative-agent form,
    solved as its own LP (used to cross-check the allocation form)."""
    _ensure_shareable(s)
    space = s.space
    m = space.size
    B, prices, _ = s.stacked_basis()
    ktot = B.shape[1]
    offsets = []
    pos = ktot
    for r in s.regimes:
        offsets.append(pos)
        pos += r.support.dim
    ntot = pos
    c = np.zeros(ntot)
    c[:ktot] = prices
    rows, senses, rhs = [], [], []
    for idx, r in enumerate(s.regimes):
        if not isinstance(r.acceptance, PolyhedralAcceptanceSet):
            raise DomainError("payoff-form LP needs polyhedral acceptance sets")
        W = r.acceptance.weight_matrix()
        inc = r.support.included
        o = offsets[idx]
        ni = r.support.dim
        for jrow in range(W.shape[0]):
            row = np.zeros(ntot)
            row[o:o + ni] = W[jrow, inc]
            rows.append(row)
            senses.append(linprog.LE)
            rhs.append(r.acceptance.bounds[jrow])
    for w in range(m):
        row = np.zeros(ntot)
        row[:ktot] = B[w]
        for idx, r in enumerate(s.regimes):
            inc = r.support.included
            if inc[w]:
                local = int(np.nonzero(np.nonzero(inc)[0] == w)[0][0])
                row[offsets[idx] + local] = 1.0
        rows.append(row)
        senses.append(linprog.EQ)
        rhs.append(X.values[w])
    sol = linprog.solve(linprog.LpProblem(
        c=c, rows=np.array(rows), senses=senses, rhs=np.array(rhs),
        lower=np.full(ntot, -math.inf), upper=np.full(ntot, math.inf)))
    if sol.status == "infeasible":
        return RiskValue.infinite()
    if sol.status == "unbounded":
        raise InternalInconsistency("payoff-form LP unbounded under pi(0)=0")
    return RiskValue.finite(sol.objective_value)


# ----------------------------------------------------------------------
# allocations from payoffs
# ----------------------------------------------------------------------

def pareto_from_payoff(s: AgentSystem, X: RandomVariable,
                       Z: RandomVariable) -> Allocation:
    """Turn an optimal aggregate payoff into a Pareto allocation: find
    acceptable parts summing to X - Z, split Z by the canonical security
    selection, and recombine."""
    res = capital_requirement(s, X, certify=False)
    if not res.value.is_finite:
        raise DomainError("X is not shareable (Lambda = +inf)")
    price = s.pi(Z.values)
    if abs(price - res.value.value) > 1e-8 * (1 + abs(price)):
        raise DomainError(
            f"payoff price {price} does not match Lambda(X) = {res.value.value}"
        )
    target = X.values - Z.values
    parts_acc = _acceptable_decomposition(s, target)
    if parts_acc is None:
        raise DomainError(
            "X - Z is not in the aggregate acceptance set; the payoff "
            "violates the optimality contract"
        )
    secs = security_selection(s, Z)
    return Allocation(tuple(
        RandomVariable(s.space, y + sec.values)
        for y, sec in zip(parts_acc, secs)
    ))


def _acceptable_decomposition(s: AgentSystem, target: np.ndarray):
    """Y_i in A_i (inside supports) with sum = target, or None (an LP
    feasibility query for membership in the Minkowski sum A_+)."""
    space = s.space
    m = space.size
    offsets, pos = [], 0
    for r in s.regimes:
        offsets.append(pos)
        pos += r.support.dim
    ntot = pos
    rows, senses, rhs = [], [], []
    for idx, r in enumerate(s.regimes):
        o = offsets[idx]
        ni = r.support.dim
        inc = r.support.included
        if isinstance(r.acceptance, PolyhedralAcceptanceSet):
            W = r.acceptance.weight_matrix()
            for jrow in range(W.shape[0]):
                row = np.zeros(ntot)
                row[o:o + ni] = W[jrow, inc]
                rows.append(row)
                senses.append(linprog.LE)
                rhs.append(r.acceptance.bounds[jrow])
        else:
            raise DomainError("acceptable decomposition needs polyhedral sets")
    for w in range(m):
        row = np.zeros(ntot)
        for idx, r in enumerate(s.regimes):
            inc = r.support.included
            if inc[w]:
                local = int(np.nonzero(np.nonzero(inc)[0] == w)[0][0])
                row[offsets[idx] + local] = 1.0
        rows.append(row)
        senses.append(linprog.EQ)
        rhs.append(target[w])
    sol = linprog.solve(linprog.LpProblem(
        c=np.zeros(ntot), rows=np.array(rows), senses=senses,
        rhs=np.array(rhs), lower=np.full(ntot, -math.inf),
        upper=np.full(ntot, math.inf)))
    if sol.status != "optimal":
        return None
    out = []
    for idx, r in enumerate(s.regimes):
        o = offsets[idx]
        ni = r.support.dim
        y = np.zeros(m)
        y[r.support.included] = sol.primal[o:o + ni]
        out.append(y)
    return out


# ----------------------------------------------------------------------
# the continuous security selection
# ----------------------------------------------------------------------

def selection_blocks(bases) -> list:
    """Per-agent column selections forming a direct-sum decomposition of
    the aggregate span: walk the agents in order and keep every basis
    column that enlarges the span covered so far.  Kept columns are the
    agents' own payoffs, so each block lies inside its agent's span."""
    blocks = []
    qacc = np.zeros((bases[0].shape[0], 0))
    for B in bases:
        kept = []
        for j in range(B.shape[1]):
            col = B[:, j]
            resid = col - qacc @ (qacc.T @ col) if qacc.shape[1] else col
            norm = np.linalg.norm(resid)
            if norm > SPAN_TOL * max(1.0, np.linalg.norm(col)):
                kept.append(col)
                qacc = np.hstack([qacc, (resid / norm)[:, None]])
        blocks.append(np.column_stack(kept) if kept
                      else np.zeros((B.shape[0], 0)))
    return blocks


def block_decompose(blocks, values) -> list:
    """Split a vector of the aggregate span along the direct-sum blocks.
    The stacked kept columns have full column rank, so the coefficients
    are unique and the parts sum back exactly."""
    stacked = np.hstack([b for b in blocks if b.shape[1]])
    coeffs, *_ = np.linalg.lstsq(stacked, values, rcond=None)
    resid = float(np.max(np.abs(stacked @ coeffs - values)))
    if resid > 1e-9 * max(1.0, float(np.max(np.abs(values)))):
        raise NumericalFailure(f"selection parts sum off by {resid:.2e}")
    parts, at = [], 0
    for b in blocks:
        k = b.shape[1]
        parts.append(b @ coeffs[at:at + k] if k else np.zeros(len(values)))
        at += k
    return parts


def security_selection(s: AgentSystem, Z: RandomVariable) -> list:
    """The canonical linear selection of a security allocation: decompose Z
    along the sequential direct-sum blocks.  Parts sum to Z exactly and
    each lies in its agent's span."""
    if s.aggregate_contains(Z.values) is None:
        raise DomainError("payoff lies outside the aggregate security span")
    bases = [r.market.basis_matrix() for r in s.regimes]
    parts = block_decompose(selection_blocks(bases), Z.values)
    return [RandomVariable(s.space, p) for p in parts]


def shift_allocation(s: AgentSystem, alloc: Allocation, i: int, j: int,
                     amount: float, direction: RandomVariable = None) -> Allocation:
    """One-parameter Pareto family: move `amount * direction` from agent j
    to agent i along a commonly-traded direction (default: the first
    nontrivially-priced vector of S_i ∩ S_j).  Total risk is preserved
    because both agents price the direction identically; certified before
    returning."""
    if direction is None:
        vectors, us, _ = pair_intersection(s, i, j)
        cand = [z for z, u in zip(vectors, us)
                if abs(s.regimes[i].market.price(u)) > 1e-10]
        if not cand:
            raise DomainError(
                f"agents {i} and {j} share no nontrivially priced securities"
            )
        direction = RandomVariable(s.space, cand[0])
    before = sum(rho(r, p).value.as_float() for r, p in zip(s.regimes, alloc.parts))
    parts = list(alloc.parts)
    parts[i] = parts[i] + direction * amount
    parts[j] = parts[j] - direction * amount
    for k in (i, j):
        if not s.regimes[k].support.contains(parts[k], tol=1e-9):
            raise DomainError("shifted part leaves an agent's support ideal")
    after = sum(rho(r, p).value.as_float() for r, p in zip(s.regimes, parts))
    if abs(after - before) > 1e-8 * (1 + abs(before)):
        raise DomainError(
            f"shift changed the total risk ({before} -> {after}); the "
            f"direction is not priced consistently"
        )
    return Allocation(tuple(parts))


# ----------------------------------------------------------------------
# recession data and level sets
# ----------------------------------------------------------------------

@dataclass
class RecessionData:
    cone_weights: np.ndarray     # rows w: recession cone = {U : w @ U <= 0}
    lineality: np.ndarray        # orthonormal columns spanning the lineality


def recession_data(acc: PolyhedralAcceptanceSet, support=None) -> RecessionData:
    """Recession cone and lineality space of a polyhedral acceptance set:
    the cone is the homogeneous system of the defining functionals, the
    lineality their common kernel.  With a support mask the kernel is taken
    inside that coordinate subspace; lineality vectors come back in ambient
    coordinates (zero off the support)."""
    W = acc.weight_matrix()
    if support is None:
        return RecessionData(cone_weights=W, lineality=linprog.null_space(W))
    inc = support.included
    ns = linprog.null_space(W[:, inc])
    lin = np.zeros((W.shape[1], ns.shape[1]))
    lin[inc] = ns
    return RecessionData(cone_weights=W, lineality=lin)


def level_set_certificate(s: AgentSystem, X: RandomVariable, c: float,
                          U: RandomVariable) -> bool:
    """LP feasibility for  X - c*U  in  A_+ + ker(pi): certifies the level
    set identity L_c(Lambda) = c U + A_+ + ker(pi)."""
    B, prices, _ = s.stacked_basis()
    target = X.values - c * U.values
    space = s.space
    m = space.size
    ktot = B.shape[1]
    offsets, pos = [], ktot
    for r in s.regimes:
        offsets.append(pos)
        pos += r.support.dim
    ntot = pos
    rows, senses, rhs = [], [], []
    price_row = np.zeros(ntot)
    price_row[:ktot] = prices
    rows.append(price_row)
    senses.append(linprog.EQ)
    rhs.append(0.0)
    for idx, r in enumerate(s.regimes):
        W = r.acceptance.weight_matrix()
        inc = r.support.included
        o = offsets[idx]
        ni = r.support.dim
        for jrow in range(W.shape[0]):
            row = np.zeros(ntot)
            row[o:o + ni] = W[jrow, inc]
            rows.append(row)
            senses.append(linprog.LE)
            rhs.append(r.acceptance.bounds[jrow])
    for w in range(m):
        row = np.zeros(ntot)
        row[:ktot] = B[w]
        for idx, r in enumerate(s.regimes):
            inc = r.support.included
            if inc[w]:
                local = int(np.nonzero(np.nonzero(inc)[0] == w)[0][0])
                row[offsets[idx] + local] = 1.0
        rows.append(row)
        senses.append(linprog.EQ)
        rhs.append(target[w])
    sol = linprog.solve(linprog.LpProblem(
        c=np.zeros(ntot), rows=np.array(rows), senses=senses,
        rhs=np.array(rhs), lower=np.full(ntot, -math.inf),
        upper=np.full(ntot, math.inf)))
    return sol.status == "optimal"
