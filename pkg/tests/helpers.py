"""Shared builders for test fixtures: the three-scenario overlap instance
(two agents whose ceilings overlap on the middle scenario) and small
law-invariant regimes."""

import numpy as np

from riskshare.regime import (
    LawInvariantAcceptanceSet,
    PolyhedralAcceptanceSet,
    RiskMeasurementRegime,
    SecurityMarket,
)
from riskshare.scenario import Functional, ScenarioSpace, SupportMask


def three_space():
    return ScenarioSpace.uniform(["a", "b", "c"])


def point_eval(space, label):
    """Functional acting as X -> X(label)."""
    d = np.zeros(space.size)
    i = space.index(label)
    d[i] = 1.0 / space.probs[i]
    return Functional(space, d)


def ceiling_regime(space, labels, ceilings):
    """Agent supported on `labels` with per-scenario ceilings: acceptable
    iff X(label) <= ceiling for each owned label; securities are the
    indicators of the owned labels, each priced 1."""
    functionals = tuple(point_eval(space, lab) for lab in labels)
    acc = PolyhedralAcceptanceSet(functionals, np.asarray(ceilings, dtype=float))
    market = SecurityMarket(
        tuple(space.indicator([lab]) for lab in labels),
        np.ones(len(labels)),
    )
    return RiskMeasurementRegime(
        support=SupportMask.from_labels(space, labels),
        acceptance=acc,
        market=market,
    )


def overlap_pair(space=None, k1=(1.0, 2.0), k2=(1.0, 3.0)):
    """The worked three-scenario instance: agent 1 on {a, b}, agent 2 on
    {b, c}, ceilings k1 on (a, b) and k2 on (b, c)."""
    space = space or three_space()
    return (
        ceiling_regime(space, ["a", "b"], k1),
        ceiling_regime(space, ["b", "c"], k2),
    )


def cash_market(space, price=1.0):
    return SecurityMarket((space.rv(np.ones(space.size)),), np.array([price]))


def law_invariant_regime(space, kind, param=0.0, market=None):
    market = market or cash_market(space)
    return RiskMeasurementRegime(
        support=SupportMask.full(space),
        acceptance=LawInvariantAcceptanceSet(kind, param),
        market=market,
    )
