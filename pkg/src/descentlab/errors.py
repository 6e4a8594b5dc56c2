"""Exception types shared by every module."""


class DescentLabError(Exception):
    """Base class for all package errors."""


class InvalidArgument(DescentLabError, ValueError):
    pass


class InvalidParams(InvalidArgument):
    """Parameters violate a stated feasibility condition."""


class InvalidState(DescentLabError, RuntimeError):
    """An estimator was used before its snapshot/previous state was set."""


class Unsupported(DescentLabError, NotImplementedError):
    pass


class NumericFailure(DescentLabError, ArithmeticError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class Diverged(DescentLabError, FloatingPointError):
    """A non-finite iterate was produced at global iteration ``t``."""

    def __init__(self, t, record=None):
        super().__init__(f"diverged({t})")
        self.t = t
        self.record = record


class CertificateFailure(DescentLabError, AssertionError):
    """The recursion ``D_{t+1} + Delta_t <= omega_t D_t + E_t`` failed.

    ``where`` is the iteration index for deterministic traces and the batch
    path (tuple of batch indices) for enumerated stochastic traces.
    """

    def __init__(self, where, slack, reason="slack"):
        super().__init__(f"certificate-failure({where}, {reason}={slack:.3e})")
        self.where = where
        self.slack = slack
        self.reason = reason
