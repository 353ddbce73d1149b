"""Exception hierarchy."""


class EntropicError(Exception):
    """Base class for all package errors."""


class NonFiniteValue(EntropicError, ValueError):
    pass


class InvalidBounds(EntropicError, ValueError):
    pass


class NoFeasibleBounds(EntropicError):
    pass


class CorrectionTooLarge(EntropicError):
    """Mass defect too large to be floating-point drift."""


class BoxViolation(EntropicError):
    pass


class DimensionMismatch(EntropicError, ValueError):
    pass


class NegativeRate(EntropicError, ValueError):
    pass


class StepTooLarge(EntropicError, ValueError):
    pass


class StageLeftBox(EntropicError):
    """An internal Runge-Kutta stage left [r_eps, R_eps] by more than 1e-9."""


class EmptyMeasure(EntropicError, ValueError):
    pass


class WitnessNotLipschitz(EntropicError, ValueError):
    pass


class MaxIterations(EntropicError):
    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class InsufficientSamples(EntropicError, ValueError):
    pass


class InvariantViolation(EntropicError):
    pass


class ConfigError(EntropicError, ValueError):
    pass
