"""Exception types shared across the library."""


class LanelabError(Exception):
    """Base class for all library errors."""


class StepFailure(LanelabError):
    """ODE step size underflowed; trajectory is singular or blowing up."""


class DomainError(LanelabError):
    """Argument outside the mathematical domain of the operation."""


class NoConvergence(LanelabError):
    """Iterative method exhausted its budget without meeting tolerance."""


class SingularJacobian(LanelabError):
    """Linear solve inside Newton failed even after regularization."""


class InsufficientData(LanelabError):
    """Not enough samples for the requested extrapolation or fit."""


class InvalidExponent(LanelabError):
    """Exponent pair outside the admissible range."""


class BracketNotFound(LanelabError):
    """Initial scan found no sign change to bisect on."""


class TailNotResolved(LanelabError):
    """Far-field extrapolation residual exceeds its tolerance."""


class DivergentIntegral(LanelabError):
    """Requested integral does not converge in this regime."""


class WrongRegime(LanelabError):
    """Operation not defined for the exponent regime supplied."""


class QuadratureNotConverged(LanelabError):
    """Quadrature error estimate exceeds the requested tolerance."""


class OnDiagonal(LanelabError):
    """Green's function evaluated at coincident points."""


class LeftAdmissibleSet(LanelabError):
    """Search iterate left the admissible configuration set."""


class MissingConstant(LanelabError):
    """A required constant is divergent or unavailable in this regime."""


class TrivialSolution(LanelabError):
    """Newton collapsed onto the zero solution; reseed with larger amplitude."""
