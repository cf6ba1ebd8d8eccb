"""Exception types raised across the package."""


class TwistmapError(Exception):
    """Base class for all package errors."""


class ProfileError(TwistmapError, ValueError):
    """Malformed field profile or evaluation outside its time span."""


class IntegrationError(TwistmapError, RuntimeError):
    """The ODE integrator failed to advance.

    Attributes
    ----------
    time : float
        Time at which the integrator stopped.
    """

    def __init__(self, message, time):
        super().__init__(f"{message} (at t={time:.17g})")
        self.time = time


class SingularityError(IntegrationError):
    """The scaling parameter fell below its floor."""


class LocalityError(TwistmapError, ValueError):
    """A QAT-type map was used across a zero of the classical solution u2."""


class QuadratureError(TwistmapError, RuntimeError):
    """Adaptive quadrature did not converge."""


class BoundaryError(TwistmapError, RuntimeError):
    """The grid oracle lost too much norm through its outer boundary."""


class ChargeUndefinedError(TwistmapError, ValueError):
    """The wavefunction is too small on the probe circle to define a winding number."""


class ConfigError(TwistmapError, ValueError):
    """Invalid scenario configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class ScenarioError(TwistmapError, RuntimeError):
    """A runtime failure inside a scenario run, tagged with the scenario name."""

    def __init__(self, scenario, cause):
        super().__init__(f"scenario {scenario}: {type(cause).__name__}: {cause}")
        self.scenario = scenario
        self.cause = cause
