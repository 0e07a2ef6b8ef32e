"""Exception hierarchy shared by all modules."""


class ParboundError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ParboundError, ValueError):
    """An argument lies outside the set where the operation is defined."""


class ResolutionError(ParboundError, ValueError):
    """A requested scale is below what the grid or stencil can resolve."""


class ContractError(ParboundError, ValueError):
    """An input violates a structural requirement (symmetry, ellipticity, ...)."""


class DegeneracyError(ParboundError, RuntimeError):
    """A construction degenerated numerically (lost monotonicity, vanishing normalizer)."""


class SolverError(ParboundError, RuntimeError):
    """The linear solver failed to reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CalibrationError(ParboundError, RuntimeError):
    """No admissible constant exists in the searched range."""


class PropertyFailure(ParboundError, AssertionError):
    """A checked inequality failed beyond its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(ParboundError, ValueError):
    """A manifest or experiment configuration is invalid."""

    def __init__(self, message, key=None, line=None):
        where = ""
        if key is not None:
            where += f" [key: {key}]"
        if line is not None:
            where += f" [line {line}]"
        super().__init__(message + where)
        self.message = message
        self.key = key
        self.line = line
