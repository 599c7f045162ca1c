"""Exception types raised across the package."""


class ContractError(ValueError):
    """An argument violated a documented precondition (shape, finiteness, sign)."""


class ModelInvariantError(RuntimeError):
    """A model quantity broke its invariant, e.g. a mass matrix that is not SPD."""


class SingularJacobianError(ArithmeticError):
    """Undamped pseudoinverse requested for a rank-deficient Jacobian.

    Pass a positive damping factor to get a finite (damped least squares) result.
    """


class ReachabilityError(ValueError):
    """A task-space target lies outside the reachable workspace."""


class DivergenceError(RuntimeError):
    """The closed-loop simulation blew up.

    Attributes
    ----------
    t : float
        Simulation time of the last valid state.
    state : numpy.ndarray
        Snapshot of the last valid stacked state.
    log : SimLog or None
        Log prefix up to the last valid sample, when available.
    """

    def __init__(self, message, t=None, state=None, log=None):
        super().__init__(message)
        self.t = t
        self.state = state
        self.log = log


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class LogSchemaError(KeyError):
    """A simulation log is empty or lacks a required column."""

    def __str__(self):
        return str(self.args[0]) if self.args else "log schema error"
