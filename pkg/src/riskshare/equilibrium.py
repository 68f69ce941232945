"""Equilibrium prices and allocations for risk-sharing systems.

A linear functional phi supports an equilibrium when it is nonnegative,
prices every agent's securities consistently, and no agent can lower its
capital requirement inside its budget set.  Such functionals are exactly
the subgradients of the aggregate requirement at the total endowment, and
from any one of them an equilibrium allocation is assembled by moving each
agent's Pareto part onto its budget line with a commonly traded numeraire.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linprog, market
from .errors import (
    DomainError,
    InternalInconsistency,
    NRViolation,
    StructuralError,
)
from .regime import (
    PolyhedralAcceptanceSet,
    ValidationReport,
    conjugate,
    rho,
)
from .scenario import Functional, RandomVariable

__all__ = [
    "Equilibrium",
    "subgradient",
    "common_numeraire",
    "build_equilibrium",
    "verify_equilibrium",
]

FENCHEL_TOL = 1e-6
BUDGET_TOL = 1e-8


@dataclass
class Equilibrium:
    allocation: market.Allocation
    price: Functional
    transfers: tuple                 # phi(W_i - Y_i), one per agent
    numeraire: RandomVariable        # commonly traded, priced to one
    value: float                     # aggregate requirement at the endowment
    price_unique: bool = True        # False when the dual solution may not be


# ----------------------------------------------------------------------
# subgradients of the aggregate requirement
# ----------------------------------------------------------------------

def subgradient(s: market.AgentSystem, X: RandomVariable) -> Functional:
    """A supporting functional of the aggregate requirement at X, from the
    sharing LP's scenario duals (polyhedral) or the maximizing density of
    the convolved dual (law-invariant).  Certified before returning: the
    conjugate of the requirement is the sum of the agent conjugates, and
    the Fenchel equality must close to 1e-6."""
    res = market.capital_requirement(s, X, certify=False)
    return _verified_subgradient(s, X, res)


def _verified_subgradient(s, X, res) -> Functional:
    if not res.value.is_finite:
        raise DomainError(
            "loss profile admits no supported decomposition; the "
            "requirement is infinite there"
        )
    phi = res.subgradient
    value = res.value.as_float()
    conj = _conjugate_sum(s, phi)
    gap = abs(value - (phi(X) - conj))
    if gap > FENCHEL_TOL * (1.0 + abs(value)):
        raise InternalInconsistency(
            f"candidate supporting functional misses the Fenchel equality "
            f"by {gap:.2e}"
        )
    return phi


def _conjugate_sum(s, phi) -> float:
    total = 0.0
    for r in s.regimes:
        v = conjugate(r, phi)
        if not v.is_finite:
            raise InternalInconsistency(
                "candidate supporting functional has an infinite agent "
                "conjugate (inconsistent with that agent's prices)"
            )
        total += v.as_float()
    return total


# ----------------------------------------------------------------------
# the commonly traded numeraire
# ----------------------------------------------------------------------

def common_numeraire(s: market.AgentSystem) -> RandomVariable:
    """A payoff traded by every agent, rescaled to price one.  Raises
    NRViolation when the common span is trivial or entirely priceless."""
    V, _ = np.linalg.qr(s.regimes[0].market.basis_matrix())
    for r in s.regimes[1:]:
        B = r.market.basis_matrix()
        if V.shape[1] == 0:
            break
        ns = linprog.null_space(np.hstack([V, -B]))
        V = V @ ns[:V.shape[1]]
        if V.shape[1]:
            q, rmat = np.linalg.qr(V)
            keep = np.abs(np.diag(rmat)) > 1e-10 * max(1.0, np.abs(V).max())
            V = q[:, keep]
    if V.shape[1] == 0:
        raise NRViolation("agents share no common security payoff")
    mkt0 = s.regimes[0].market
    prices = []
    for k in range(V.shape[1]):
        u = mkt0.coefficients_of(V[:, k])
        if u is None:
            raise InternalInconsistency(
                "common-span vector left the first agent's span"
            )
        prices.append(mkt0.price(u))
    k = int(np.argmax(np.abs(prices)))
    if abs(prices[k]) <= 1e-10:
        raise NRViolation(
            "every commonly traded payoff has price zero; no numeraire"
        )
    return RandomVariable(s.space, V[:, k] / prices[k])


# ----------------------------------------------------------------------
# construction
# ----------------------------------------------------------------------

def build_equilibrium(s: market.AgentSystem, endowments,
                      check_interior: bool = True) -> Equilibrium:
    """Equilibrium from a Pareto allocation of the total endowment: each
    agent receives its Pareto part plus the transfer phi(W_i - Y_i) in
    units of the common numeraire, which lands it exactly on its budget
    line while keeping the total unchanged."""
    endowments = tuple(endowments)
    if len(endowments) != len(s.regimes):
        raise StructuralError("one endowment per agent required")
    for w in endowments:
        if w.space.labels != s.space.labels:
            raise StructuralError("endowment on a different scenario space")
    space = s.space
    total = np.sum([w.values for w in endowments], axis=0)
    W = RandomVariable(space, total)

    res = market.capital_requirement(s, W, certify=True)
    if not res.value.is_finite:
        raise DomainError("total endowment admits no supported decomposition")
    if check_interior and not s.is_law_invariant:
        _probe_interior(s, W)

    phi = _verified_subgradient(s, W, res)
    numeraire = common_numeraire(s)
    transfers = tuple(
        float(phi.weights @ (w.values - y.values))
        for w, y in zip(endowments, res.allocation.parts)
    )
    drift = abs(sum(transfers))
    if drift > BUDGET_TOL * (1.0 + float(np.max(np.abs(total)))):
        raise InternalInconsistency(
            f"transfers sum to {drift:.2e} instead of zero"
        )
    parts = tuple(
        RandomVariable(space, y.values + t * numeraire.values)
        for y, t in zip(res.allocation.parts, transfers)
    )
    return Equilibrium(
        allocation=market.Allocation(parts),
        price=phi,
        transfers=transfers,
        numeraire=numeraire,
        value=res.value.as_float(),
        price_unique=not res.dual_degenerate,
    )


def _probe_interior(s, W):
    """The supporting-functional construction needs the endowment interior
    to the requirement's domain; in finite dimension, coordinate probes
    decide that exactly for polyhedral systems."""
    eps = 1e-6 * (1.0 + float(np.max(np.abs(W.values))))
    for w in range(s.space.size):
        for sign in (+1.0, -1.0):
            probe = W.values.copy()
            probe[w] += sign * eps
            value = market.capital_requirement(
                s, RandomVariable(s.space, probe), certify=False).value
            if not value.is_finite:
                raise DomainError(
                    f"total endowment sits on the boundary of the "
                    f"requirement's domain (perturbing scenario {w} "
                    f"by {sign * eps:+.1e} makes it infinite)"
                )


# ----------------------------------------------------------------------
# verification
# ----------------------------------------------------------------------

def verify_equilibrium(s: market.AgentSystem, endowments,
                       eq: Equilibrium) -> ValidationReport:
    """Full check of the equilibrium definition: price positivity, price
    consistency on every security span, budget equalities, per-agent
    optimality inside the budget set, and Pareto optimality of the
    allocation."""
    endowments = tuple(endowments)
    space = s.space
    phi = eq.price
    rep = ValidationReport()

    worst_neg = float(np.min(phi.density))
    rep.add("price_nonnegative", worst_neg >= -1e-10,
            f"min density {worst_neg:.3e}")

    worst = 0.0
    for r in s.regimes:
        B = r.market.basis_matrix()
        for k in range(r.market.dim):
            worst = max(worst, abs(float(phi.weights @ B[:, k])
                                   - r.market.prices[k]))
    rep.add("price_consistent_on_security_spans", worst <= BUDGET_TOL,
            f"max price deviation {worst:.2e}")

    total = np.sum([w.values for w in endowments], axis=0)
    resid = float(np.max(np.abs(eq.allocation.total() - total)))
    supported = all(r.support.contains(x, tol=1e-9)
                    for r, x in zip(s.regimes, eq.allocation.parts))
    rep.add("allocation_feasible", resid <= 1e-8 and supported,
            f"sum residual {resid:.2e}, parts supported: {supported}")

    worst_budget = max(
        abs(float(phi.weights @ (x.values - w.values)))
        for x, w in zip(eq.allocation.parts, endowments)
    )
    rep.add("budget_equalities", worst_budget <= BUDGET_TOL,
            f"max |phi(X_i) - phi(W_i)| = {worst_budget:.2e}")

    gaps = []
    ok = True
    risks = []
    for r, x, w in zip(s.regimes, eq.allocation.parts, endowments):
        try:
            ri = rho(r, x).value.as_float()
        except DomainError:
            ri = math.inf
        risks.append(ri)
        budget = float(phi.weights @ w.values)
        if isinstance(r.acceptance, PolyhedralAcceptanceSet):
            best = _budget_optimum(r, phi, budget)
        else:
            cv = conjugate(r, phi)
            best = budget - cv.as_float() if cv.is_finite else -math.inf
        gap = ri - best
        gaps.append(gap)
        ok &= abs(gap) <= FENCHEL_TOL * (1.0 + abs(ri))
    rep.add("individual_optimality", ok,
            "budget-constrained gaps: "
            + ", ".join(f"{g:.2e}" for g in gaps))

    lam = market.capital_requirement(
        s, RandomVariable(space, total), certify=False).value
    if lam.is_finite:
        pareto_gap = abs(sum(risks) - lam.as_float())
        rep.add("pareto_optimal",
                pareto_gap <= BUDGET_TOL * (1.0 + abs(lam.as_float())),
                f"sum of risks deviates from requirement by {pareto_gap:.2e}")
    else:
        rep.add("pareto_optimal", False, "aggregate requirement infinite")
    return rep


def _budget_optimum(r, phi, budget: float) -> float:
    """min { rho_i(Y) : phi(Y) >= budget } as one LP over the agent's
    supported profiles and security coefficients."""
    inc = r.support.included
    ni = int(inc.sum())
    Wm = r.acceptance.weight_matrix()
    B = r.market.basis_matrix()
    WB = Wm @ B
    K = r.market.dim
    J = Wm.shape[0]
    c = np.concatenate([np.zeros(ni), r.market.prices])
    rows = np.zeros((J + 1, ni + K))
    rows[:J, :ni] = Wm[:, inc]
    rows[:J, ni:] = -WB
    rows[J, :ni] = -phi.weights[inc]
    rhs = np.concatenate([r.acceptance.bounds, [-budget]])
    sol = linprog.solve(linprog.LpProblem(
        c=c, rows=rows, senses=[linprog.LE] * (J + 1), rhs=rhs,
        lower=np.full(ni + K, -math.inf), upper=np.full(ni + K, math.inf)))
    if sol.status == "unbounded":
        return -math.inf
    if sol.status == "infeasible":
        raise InternalInconsistency(
            "budget set empty although the acceptance set is nonempty"
        )
    return float(sol.objective_value)
