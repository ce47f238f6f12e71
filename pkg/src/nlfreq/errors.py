"""Exception hierarchy shared by every nlfreq module."""


class NlfreqError(Exception):
    """Base class for all errors raised by nlfreq."""


class ModelError(NlfreqError, ValueError):
    """Invalid model definition or parameter."""


class ExpressionError(NlfreqError, ValueError):
    """Problem with a model expression.

    ``offset`` is the byte offset of the offending token in the source text
    (``None`` when the error is not tied to a position).
    """

    kind = "expression"

    def __init__(self, message, offset=None, text=None):
        self.offset = offset
        self.text = text
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class ExpressionSyntaxError(ExpressionError):
    kind = "syntax"


class UnknownIdentifierError(ExpressionError):
    kind = "unknown-identifier"


class ArityError(ExpressionError):
    kind = "arity"


class UnboundVariableError(ExpressionError):
    kind = "unbound"


class IntegrationError(NlfreqError, RuntimeError):
    """The ODE integrator could not advance the solution."""

    def __init__(self, message, t=None, h=None):
        self.t = t
        self.h = h
        super().__init__(message)


class StepUnderflow(IntegrationError):
    """Required step size fell below the minimum (stiffness or blow-up)."""


class NonFiniteState(IntegrationError):
    """The state or its derivative became NaN or infinite."""


class NoConvergence(NlfreqError, RuntimeError):
    """Periodic steady state was not reached within the period budget."""

    def __init__(self, message, periods=None, residual=None, subharmonic=None):
        self.periods = periods
        self.residual = residual
        self.subharmonic = subharmonic
        super().__init__(message)


class DegenerateResponse(NlfreqError, ValueError):
    """The steady-state output is (numerically) zero; phase and radius are undefined."""


class InvalidRecord(NlfreqError, ValueError):
    """A steady-state record violates a structural requirement."""


class SingularSystemError(NlfreqError, ArithmeticError):
    """A linear system that must be uniquely solvable is singular."""


class IncommensurateFrequencies(NlfreqError, ValueError):
    """No common period exists within the admissible rational tolerance."""


class ConfigError(NlfreqError, ValueError):
    """Run configuration failed validation; ``path`` locates the bad value."""

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)
