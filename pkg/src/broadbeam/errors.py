"""Exception types raised by broadbeam."""


class BroadbeamError(Exception):
    """Base class for all package errors."""


class ZeroFilterEnergy(BroadbeamError, ValueError):
    """All filters are null at the requested frequency, so WNG is undefined."""


class NearZeroResponse(BroadbeamError, ValueError):
    """The response is (numerically) zero, so its phase and group delay are undefined."""


class AsymmetricGeometry(BroadbeamError, ValueError):
    """A reduced parameterization was requested for a non-symmetric array."""


class ShapeMismatch(BroadbeamError, ValueError):
    pass


class DimensionMismatch(BroadbeamError, ValueError):
    pass


class NonpositiveFloor(BroadbeamError, ValueError):
    pass


class Infeasible(BroadbeamError, RuntimeError):
    """The design problem has no feasible point.

    ``family`` names the constraint family the solver certificate points at,
    when it can be identified.
    """

    def __init__(self, message, outcome=None, family=None):
        super().__init__(message)
        self.outcome = outcome
        self.family = family


class SolverFailure(BroadbeamError, RuntimeError):
    def __init__(self, message, outcome=None, state=None):
        super().__init__(message)
        self.outcome = outcome
        self.state = state


class ConfigError(BroadbeamError, ValueError):
    """Raised with the full list of violated fields."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))
