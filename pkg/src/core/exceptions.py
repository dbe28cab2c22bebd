"""
Exception hierarchy for ids-lab.

Every failure a service can report has its own class so that the scenario
runner can name the failing check precisely. Input problems derive from
``ValueError`` and numerical breakdowns from ``ArithmeticError`` or
``RuntimeError``, so callers that only know the builtin families still catch
them.
"""


class IdsLabError(Exception):
    """Base class for all ids-lab errors."""


# Input / precondition errors

class ConfigInvalid(IdsLabError, ValueError):
    """Scenario configuration is inconsistent or unreadable."""


class FieldFormatError(IdsLabError, ValueError):
    """A field or dataset container is malformed."""


class GridTooSmall(IdsLabError, ValueError):
    """Grid has too few nodes for the requested stencils."""


class SymmetryViolation(IdsLabError, ValueError):
    """A field declared symmetric is not."""


class ShellOutsideGrid(IdsLabError, ValueError):
    """A sampling shell does not fit inside the grid interior."""


class SphereOutsideGrid(IdsLabError, ValueError):
    """A flux sphere does not fit inside the grid interior."""


class NotSpacelike(IdsLabError, ValueError):
    """Graph function has sup|grad f| >= 1 on the grid."""


class HorizonTooClose(IdsLabError, ValueError):
    """Schwarzschild excision radius reaches the coordinate singularity region."""


class NonPositiveLapse(IdsLabError, ValueError):
    """The |grad u|^-2 function of a pp-wave is not strictly positive."""


class LevelOutOfRange(IdsLabError, ValueError):
    """Requested level value is outside the interior range of u."""


class NoIntersection(IdsLabError, ValueError):
    """No grid segment crosses the requested level set."""


class NotConverged(IdsLabError, ValueError):
    """A report was requested for an unconverged harmonic solution."""


# Numerical breakdowns

class SingularMetric(IdsLabError, ArithmeticError):
    """Pointwise metric inversion failed (|det g| below threshold)."""


class NonFinite(IdsLabError, ArithmeticError):
    """NaN or Inf encountered in a field."""


class DegenerateFit(IdsLabError, ArithmeticError):
    """All sampled values are too small to fit a power law."""


class GradientTooSmall(IdsLabError, ArithmeticError):
    """|grad u| is too small to build an adapted frame or development."""


class SliceDegenerates(IdsLabError, ArithmeticError):
    """det g_t dropped below the degeneracy guard during evolution."""


class StepTooLarge(IdsLabError, ArithmeticError):
    """Runge-Kutta consistency check failed; the time step is too large."""


class ExtrapolationUnstable(IdsLabError, RuntimeError):
    """Richardson extrapolation residual is too large relative to the data."""


class LinearSolveDiverged(IdsLabError, RuntimeError):
    """Inner conjugate-gradient solve did not reach its tolerance."""
