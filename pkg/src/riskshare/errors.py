"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific class that applies rather than bare ValueError.
"""


class RiskShareError(Exception):
    """Base class for all package errors."""


class StructuralError(RiskShareError):
    """Malformed inputs: mismatched scenario spaces, bad dimensions,
    invalid construction data."""


class InternalInconsistency(RiskShareError):
    """Two independent computations of the same quantity disagree beyond
    tolerance.  Always a bug or a numerically hostile instance; never
    silently ignored."""


class DomainError(RiskShareError):
    """A mathematical precondition is violated: a loss profile outside an
    agent's support ideal, an unsupported acceptance-set combination, a
    system without the required overlap structure."""


class GridRefusal(DomainError):
    """A brute-force grid request exceeds the documented size cap.  The
    refusal is deterministic: the same request always refuses."""


class NRViolation(DomainError):
    """The agents share no commonly traded payoff with nonzero price, so
    the equilibrium numeraire construction has nothing to transfer value
    with."""


class NumericalFailure(RiskShareError):
    """An iterative routine exhausted its iteration budget or lost its
    certificate.  Distinct from a wrong answer: nothing is returned."""
