"""Exception types raised across the package."""


class RadvarError(Exception):
    """Base class for all package errors."""


class LipschitzViolation(RadvarError):
    pass


class SupportViolation(RadvarError):
    pass


class OutsideDomain(RadvarError):
    pass


class InsufficientWalks(RadvarError):
    pass


class EmptyBall(RadvarError):
    pass


class MaxStepsExceeded(RadvarError):
    pass


class StepTooLarge(RadvarError):
    pass


class InvalidRadii(RadvarError):
    pass


class InvalidHeights(RadvarError):
    pass


class ShapeMismatch(RadvarError):
    pass


class QuadratureUnstable(RadvarError):
    pass


class PreconditionViolated(RadvarError):
    pass


class NoFeasibleN(RadvarError):
    pass


class NoConvergence(RadvarError):
    pass


class NonPositivePsi(RadvarError):
    pass


class NonPositiveOmega(RadvarError):
    pass


class NonPositive(RadvarError):
    pass


class NotCauchy(RadvarError):
    pass


class GridTooCoarse(RadvarError):
    pass


class InsufficientRadii(RadvarError):
    pass


class ConfigError(RadvarError):
    pass
