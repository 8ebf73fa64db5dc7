"""Exception hierarchy shared by all modules."""


class BcsError(Exception):
    """Base class for every error raised by bcslab."""


class ConfigError(BcsError):
    """A configuration, node file or gains file is malformed or inconsistent."""


class NumericError(BcsError):
    """Base class for failures of a numerical kernel."""


class SingularMatrix(NumericError):
    """A linear system could not be solved to the required residual."""


class NoConvergence(NumericError):
    """An eigen- or subspace computation did not meet its residual contract."""


class RankDeficientBoundary(NumericError):
    """A boundary trace operator lost full row rank."""


class SingularAtLambda(NumericError):
    """The boundary value problem is singular at the requested frequency."""

    def __init__(self, lam: complex, message: str = ""):
        self.lam = lam
        super().__init__(message or f"boundary value problem singular at lambda={lam!r}")


class IllConditionedFit(NumericError):
    """A regression was requested on too few or degenerate data points."""
