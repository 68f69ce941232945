import numpy as np
import pytest

from riskshare import linprog, market
from riskshare.errors import DomainError, StructuralError
from riskshare.market import (
    AgentSystem,
    Allocation,
    capital_requirement,
    capital_requirement_payoff_form,
    level_set_certificate,
    nsa_check,
    pareto_from_payoff,
    recession_data,
    security_selection,
    shift_allocation,
    validate_star,
)
from riskshare.regime import (
    PolyhedralAcceptanceSet,
    RiskMeasurementRegime,
    SecurityMarket,
    rho,
)
from riskshare.scenario import Functional, ScenarioSpace, SupportMask

from helpers import ceiling_regime, overlap_pair, point_eval, three_space


@pytest.fixture
def overlap_system():
    space = three_space()
    return space, AgentSystem(overlap_pair(space))


def total_risk(system, alloc):
    return sum(
        rho(r, part).value.as_float()
        for r, part in zip(system.regimes, alloc.parts)
    )


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def test_system_needs_cover():
    space = ScenarioSpace.uniform(["a", "b", "c", "d"])
    r1 = ceiling_regime(space, ["a", "b"], (1.0, 1.0))
    r2 = ceiling_regime(space, ["b", "c"], (1.0, 1.0))
    with pytest.raises(StructuralError):
        AgentSystem((r1, r2))   # nobody owns d


def test_system_needs_two_agents():
    space = three_space()
    r1 = ceiling_regime(space, ["a", "b", "c"], (1.0, 1.0, 1.0))
    with pytest.raises(StructuralError):
        AgentSystem((r1,))


# ---------------------------------------------------------------------------
# price agreement and connectivity
# ---------------------------------------------------------------------------

def test_star_holds_on_overlap(overlap_system):
    _, s = overlap_system
    rep = validate_star(s)
    assert rep.passed


def test_star_price_disagreement():
    space = three_space()
    r1 = ceiling_regime(space, ["a", "b"], (1.0, 2.0))
    # same shape as r1's partner but the shared indicator trades at 2
    acc = PolyhedralAcceptanceSet(
        (point_eval(space, "b"), point_eval(space, "c")),
        np.array([1.0, 3.0]),
    )
    mkt = SecurityMarket(
        (space.indicator(["b"]), space.indicator(["c"])),
        np.array([2.0, 1.0]),
    )
    r2 = RiskMeasurementRegime(
        support=SupportMask.from_labels(space, ["b", "c"]),
        acceptance=acc, market=mkt)
    rep = validate_star(AgentSystem((r1, r2)))
    names = {c.name: c.passed for c in rep.checks}
    assert not names["price_agreement_on_intersections"]


def test_star_disconnected():
    space = ScenarioSpace.uniform(["a", "b", "c", "d"])
    r1 = ceiling_regime(space, ["a", "b"], (1.0, 1.0))
    r2 = ceiling_regime(space, ["c", "d"], (1.0, 1.0))
    rep = validate_star(AgentSystem((r1, r2)))
    names = {c.name: c.passed for c in rep.checks}
    assert names["price_agreement_on_intersections"]   # vacuous
    assert not names["relation_graph_connected"]


# ---------------------------------------------------------------------------
# the pi(0) dichotomy
# ---------------------------------------------------------------------------

def test_nsa_overlap_pair(overlap_system):
    _, s = overlap_system
    res = nsa_check(s)
    assert res.dim_v == 1
    assert res.pi_zero_is_zero
    assert res.lp_status == "optimal"
    assert res.verdict() == "pi(0)=0"


def _triple_agents(space, include_third=True):
    """Three agents on a common unit: each holds the unit at price 1 plus
    one zero-price spread; the spreads satisfy a + b = c while agent 3
    prices c at 0.5, so withholding c and going long a, b earns money at
    every scale."""
    unit = space.rv(np.ones(3))
    spread_a = space.rv(np.array([1.0, -1.0, 0.0]))
    spread_b = space.rv(np.array([0.0, 1.0, -1.0]))
    spread_c = space.rv(np.array([1.0, 0.0, -1.0]))
    full = SupportMask.full(space)
    acc = PolyhedralAcceptanceSet((Functional(space, np.ones(3)),),
                                  np.array([0.0]))
    mk = lambda extras, prices: SecurityMarket(
        (unit,) + extras, np.array([1.0] + prices))
    agents = [
        RiskMeasurementRegime(support=full, acceptance=acc,
                              market=mk((spread_a,), [0.0])),
        RiskMeasurementRegime(support=full, acceptance=acc,
                              market=mk((spread_b,), [0.0])),
    ]
    if include_third:
        agents.append(RiskMeasurementRegime(
            support=full, acceptance=acc, market=mk((spread_c,), [0.5])))
    return AgentSystem(tuple(agents))


def test_nsa_violation_three_agents():
    space = three_space()
    s = _triple_agents(space)
    assert validate_star(s).passed      # prices agree where spans meet
    res = nsa_check(s)
    assert res.dim_v == 3
    assert not res.pi_zero_is_zero
    assert res.lp_status == "unbounded"
    with pytest.raises(DomainError):
        capital_requirement(s, space.rv(np.zeros(3)))
    with pytest.raises(DomainError):
        s.pi(np.ones(3))


def test_nsa_restored_without_third_agent():
    space = three_space()
    s = _triple_agents(space, include_third=False)
    res = nsa_check(s)
    assert res.dim_v == 1
    assert res.pi_zero_is_zero


# ---------------------------------------------------------------------------
# glued prices
# ---------------------------------------------------------------------------

def test_pi_agrees_with_agent_prices(overlap_system):
    space, s = overlap_system
    assert s.pi(space.indicator(["a"]).values) == pytest.approx(1.0, abs=1e-10)
    assert s.pi(space.indicator(["b"]).values) == pytest.approx(1.0, abs=1e-10)
    assert s.pi(np.array([3.0, 2.0, 3.0])) == pytest.approx(8.0, abs=1e-9)


def test_pi_outside_span():
    space = three_space()
    acc = PolyhedralAcceptanceSet((Functional(space, np.ones(3)),),
                                  np.array([0.0]))
    cash = SecurityMarket((space.rv(np.ones(3)),), np.array([1.0]))
    r = RiskMeasurementRegime(support=SupportMask.full(space),
                              acceptance=acc, market=cash)
    s = AgentSystem((r, r))
    with pytest.raises(DomainError):
        s.pi(np.array([1.0, 2.0, 3.0]))


# ---------------------------------------------------------------------------
# the sharing functional
# ---------------------------------------------------------------------------

def test_overlap_value_and_payoff(overlap_system):
    space, s = overlap_system
    X = space.rv(np.array([4.0, 5.0, 6.0]))
    res = capital_requirement(s, X)
    assert res.value.is_finite
    assert res.value.value == pytest.approx(8.0, abs=1e-8)
    np.testing.assert_allclose(res.payoff.values, [3.0, 2.0, 3.0], atol=1e-8)
    np.testing.assert_allclose(res.allocation.total(), X.values, atol=1e-9)
    # parts live where their owners do
    assert s.regimes[0].support.contains(res.allocation.parts[0], tol=1e-12)
    assert s.regimes[1].support.contains(res.allocation.parts[1], tol=1e-12)
    assert total_risk(s, res.allocation) == pytest.approx(8.0, abs=1e-8)


def test_overlap_closed_form_random():
    # On the overlap instance the support constraints pin every coordinate
    # except the shared one, and the objective telescopes:
    #   Lambda(X) = X(a) + X(b) + X(c) - (k1a + k1b + k2b + k2c)
    rng = np.random.default_rng(7)
    space = three_space()
    for _ in range(25):
        k1 = rng.uniform(0.2, 3.0, 2)
        k2 = rng.uniform(0.2, 3.0, 2)
        s = AgentSystem(overlap_pair(space, tuple(k1), tuple(k2)))
        X = space.rv(rng.uniform(-5.0, 8.0, 3))
        res = capital_requirement(s, X)
        expected = X.values.sum() - (k1.sum() + k2.sum())
        assert res.value.value == pytest.approx(expected, abs=1e-8)


def test_requirement_nonpositive_inside_acceptance(overlap_system):
    space, s = overlap_system
    # X sits exactly at agent 1's ceilings; unused room elsewhere can be
    # sold, so the market requirement is strictly negative.
    X = space.rv(np.array([1.0, 2.0, 0.0]))
    res = capital_requirement(s, X)
    assert res.value.value <= 1e-12
    assert res.value.value == pytest.approx(-4.0, abs=1e-8)


def test_aggregate_additivity(overlap_system):
    space, s = overlap_system
    X = space.rv(np.array([4.0, 5.0, 6.0]))
    M = space.rv(np.array([2.0, -1.0, 3.0]))   # price 2 - 1 + 3 = 4
    lhs = capital_requirement(s, X + M).value.value
    rhs = capital_requirement(s, X).value.value + s.pi(M.values)
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_subgradient_on_overlap(overlap_system):
    space, s = overlap_system
    X = space.rv(np.array([4.0, 5.0, 6.0]))
    res = capital_requirement(s, X)
    np.testing.assert_allclose(res.subgradient.weights, np.ones(3), atol=1e-9)


def test_payoff_form_agrees(overlap_system):
    space, s = overlap_system
    rng = np.random.default_rng(11)
    for _ in range(10):
        X = space.rv(rng.uniform(-4.0, 8.0, 3))
        a = capital_requirement(s, X, certify=False).value.value
        b = capital_requirement_payoff_form(s, X).value
        assert a == pytest.approx(b, abs=1e-8)


def test_payoff_form_agrees_four_scenarios():
    space = ScenarioSpace.uniform(["a", "b", "c", "d"])
    rng = np.random.default_rng(13)
    for _ in range(10):
        r1 = ceiling_regime(space, ["a", "b", "c"], rng.uniform(0.5, 3.0, 3))
        r2 = ceiling_regime(space, ["b", "c", "d"], rng.uniform(0.5, 3.0, 3))
        s = AgentSystem((r1, r2))
        X = space.rv(rng.uniform(-5.0, 5.0, 4))
        res = capital_requirement(s, X)         # certifies sum rho_i == value
        b = capital_requirement_payoff_form(s, X).value
        assert res.value.value == pytest.approx(b, abs=1e-8)


def test_unshareable_profile_gives_infinity():
    space = three_space()
    # agent 1's acceptance demands X(a) >= 1 and X(a) <= 0 after hedging
    # with a security that cannot separate the two rows
    phi = point_eval(space, "a")
    acc = PolyhedralAcceptanceSet(
        (phi, Functional(space, -phi.density)), np.array([0.0, -1.0]))
    mkt = SecurityMarket((space.indicator(["b"]),), np.array([1.0]))
    r1 = RiskMeasurementRegime(
        support=SupportMask.from_labels(space, ["a", "b"]),
        acceptance=acc, market=mkt)
    r2 = ceiling_regime(space, ["b", "c"], (1.0, 1.0))
    s = AgentSystem((r1, r2))
    res = capital_requirement(s, space.rv(np.array([1.0, 1.0, 1.0])))
    assert not res.value.is_finite
    assert res.allocation is None


def test_wrong_space_rejected(overlap_system):
    _, s = overlap_system
    other = ScenarioSpace.uniform(["x", "y", "z"])
    with pytest.raises(StructuralError):
        capital_requirement(s, other.rv(np.zeros(3)))


# ---------------------------------------------------------------------------
# allocations from payoffs
# ---------------------------------------------------------------------------

def test_pareto_from_payoff_overlap(overlap_system):
    space, s = overlap_system
    X = space.rv(np.array([4.0, 5.0, 6.0]))
    Z = space.rv(np.array([3.0, 2.0, 3.0]))
    alloc = pareto_from_payoff(s, X, Z)
    # the acceptable parts are pinned uniquely here, so the whole
    # allocation is deterministic
    np.testing.assert_allclose(alloc.parts[0].values, [4.0, 4.0, 0.0],
                               atol=1e-9)
    np.testing.assert_allclose(alloc.parts[1].values, [0.0, 1.0, 6.0],
                               atol=1e-9)
    assert total_risk(s, alloc) == pytest.approx(8.0, abs=1e-8)


def test_pareto_rejects_mispriced_payoff(overlap_system):
    space, s = overlap_system
    X = space.rv(np.array([4.0, 5.0, 6.0]))
    with pytest.raises(DomainError):
        pareto_from_payoff(s, X, space.rv(np.zeros(3)))


def test_pareto_rejects_nonoptimal_payoff(overlap_system):
    space, s = overlap_system
    X = space.rv(np.array([4.0, 5.0, 6.0]))
    # price 8, matching Lambda, but X - Z leaves the aggregate acceptance set
    Z = space.rv(np.array([8.0, 0.0, 0.0]))
    with pytest.raises(DomainError):
        pareto_from_payoff(s, X, Z)


# ---------------------------------------------------------------------------
# the continuous security selection
# ---------------------------------------------------------------------------

def _nested_system():
    space = ScenarioSpace.uniform(["u", "d"])
    acc = PolyhedralAcceptanceSet((Functional(space, np.ones(2)),),
                                  np.array([0.0]))
    full = SupportMask.full(space)
    ones = space.rv(np.ones(2))
    updown = space.rv(np.array([1.0, -1.0]))
    r1 = RiskMeasurementRegime(
        support=full, acceptance=acc,
        market=SecurityMarket((ones,), np.array([1.0])))
    r2 = RiskMeasurementRegime(
        support=full, acceptance=acc,
        market=SecurityMarket((ones, updown), np.array([1.0, 0.2])))
    return space, AgentSystem((r1, r2))


def test_selection_example():
    space, s = _nested_system()
    parts = security_selection(s, space.rv(np.array([2.0, 0.0])))
    np.testing.assert_allclose(parts[0].values, [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(parts[1].values, [1.0, -1.0], atol=1e-12)


def test_selection_linear_and_exact():
    space, s = _nested_system()
    rng = np.random.default_rng(3)
    for _ in range(20):
        z1, z2 = rng.normal(size=2), rng.normal(size=2)
        a = rng.normal()
        p_comb = security_selection(s, space.rv(a * z1 + z2))
        p1 = security_selection(s, space.rv(z1))
        p2 = security_selection(s, space.rv(z2))
        for comb, u, v in zip(p_comb, p1, p2):
            np.testing.assert_allclose(comb.values,
                                       a * u.values + v.values, atol=1e-9)
        total = sum(p.values for p in p_comb)
        np.testing.assert_allclose(total, a * z1 + z2, atol=1e-10)


def test_selection_outside_span():
    space = three_space()
    r = ceiling_regime(space, ["a", "b", "c"], (1.0, 1.0, 1.0))
    cashish = RiskMeasurementRegime(
        support=SupportMask.full(space),
        acceptance=PolyhedralAcceptanceSet(
            (Functional(space, np.ones(3)),), np.array([0.0])),
        market=SecurityMarket((space.rv(np.ones(3)),), np.array([1.0])))
    s = AgentSystem((cashish, cashish))
    with pytest.raises(DomainError):
        security_selection(s, space.rv(np.array([1.0, 0.0, 0.0])))
    del r


def test_selection_parts_stay_in_spans(overlap_system):
    space, s = overlap_system
    rng = np.random.default_rng(5)
    for _ in range(10):
        z = rng.normal(size=3)
        parts = security_selection(s, space.rv(z))
        for r, p in zip(s.regimes, parts):
            coeffs = r.market.coefficients_of(p.values)
            assert coeffs is not None


# ---------------------------------------------------------------------------
# the one-parameter family of optima
# ---------------------------------------------------------------------------

def test_shift_along_shared_direction(overlap_system):
    space, s = overlap_system
    X = space.rv(np.array([4.0, 5.0, 6.0]))
    base = pareto_from_payoff(s, X, space.rv(np.array([3.0, 2.0, 3.0])))
    shifted = shift_allocation(s, base, 0, 1, amount=-1.0)
    np.testing.assert_allclose(shifted.parts[0].values + shifted.parts[1].values,
                               X.values, atol=1e-9)
    assert total_risk(s, shifted) == pytest.approx(8.0, abs=1e-8)
    # moved along the shared indicator
    delta = shifted.parts[0].values - base.parts[0].values
    assert abs(delta[0]) < 1e-12 and abs(delta[2]) < 1e-12


def test_shift_needs_shared_priced_direction():
    space = ScenarioSpace.uniform(["a", "b", "c", "d"])
    r1 = ceiling_regime(space, ["a", "b"], (1.0, 1.0))
    r2 = ceiling_regime(space, ["c", "d"], (1.0, 1.0))
    s = AgentSystem((r1, r2))
    alloc = Allocation((space.rv(np.array([1.0, 1.0, 0.0, 0.0])),
                        space.rv(np.array([0.0, 0.0, 1.0, 1.0]))))
    with pytest.raises(DomainError):
        shift_allocation(s, alloc, 0, 1, amount=0.5)


# ---------------------------------------------------------------------------
# recession data and level sets
# ---------------------------------------------------------------------------

def test_recession_ceiling_agent():
    space = three_space()
    r = ceiling_regime(space, ["a", "b"], (1.0, 2.0))
    data = recession_data(r.acceptance, r.support)
    assert data.lineality.shape == (3, 0)
    np.testing.assert_allclose(
        data.cone_weights, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], atol=1e-12)


def test_recession_mean_constraint():
    space = three_space()
    acc = PolyhedralAcceptanceSet((Functional(space, np.ones(3)),),
                                  np.array([0.0]))
    data = recession_data(acc, SupportMask.full(space))
    assert data.lineality.shape == (3, 1 + 1)
    np.testing.assert_allclose(data.cone_weights @ data.lineality, 0.0,
                               atol=1e-12)


def test_level_set_certificate(overlap_system):
    space, s = overlap_system
    X = space.rv(np.array([4.0, 5.0, 6.0]))
    U = space.indicator(["b"])          # traded by both agents at price 1
    assert level_set_certificate(s, X, 8.0, U)
    assert level_set_certificate(s, X, 8.5, U)
    assert not level_set_certificate(s, X, 7.5, U)
