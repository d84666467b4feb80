"""Exception and warning types shared across the package."""


class GRWError(Exception):
    """Base class for all package errors."""


class DomainError(GRWError, ValueError):
    """A time value lies outside the open interval of the warping function."""


class InvalidWarpingError(GRWError, ValueError):
    """The warping function is not positive (or its callbacks are inconsistent)."""


class IntegrationError(GRWError, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class InvalidFamilyError(GRWError, ValueError):
    """Sign pattern of (c_bar, c) does not match the requested Einstein row."""


class ConstraintError(GRWError, ValueError):
    """A parameter identity of an Einstein row fails; ``residual`` holds the defect."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DimensionError(GRWError, ValueError):
    """Field shape does not match the grid it is used with."""


class SpacelikeViolation(GRWError, ValueError):
    """|Du| >= f(u) somewhere; ``node`` is the worst node, ``margin`` the ratio there."""

    def __init__(self, message, node=None, margin=None):
        super().__init__(message)
        self.node = node
        self.margin = margin


class PreconditionError(GRWError, ValueError):
    """An operation's precondition on its input does not hold."""


class ConstraintBreach(GRWError, RuntimeError):
    """No admissible step keeps the gradient constraint |Du| <= lambda f(u)."""


class ConfigError(GRWError, ValueError):
    """Configuration text failed validation. ``errors`` lists (line, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors]
        super().__init__("; ".join(lines))


class ConditioningWarning(UserWarning):
    """The graph is close to the light cone (max |Du|/f(u) > 0.999)."""


class HypothesisWarning(UserWarning):
    """An experiment runs on a spacetime that fails the theorem's hypotheses."""


class BasePointError(GRWError, ValueError):
    """Two ambient vectors do not share a base point."""
