"""Exception types raised across the package.

Every failure mode that callers are expected to handle has its own class so
that pipelines can react (e.g. MCMC turns ModelOverflow into a rejected
proposal, the CLI maps ConfigError to exit code 2).
"""


class EmbgpError(Exception):
    """Base class for all package-specific errors."""


class UnsupportedMeasure(EmbgpError):
    """Closed-form eigenbasis requested under a measure it does not exist for."""


class InsufficientQuadrature(EmbgpError):
    """Quadrature rule too coarse for the requested basis truncation."""


class RankDeficientKernel(EmbgpError):
    """A non-positive eigenvalue appeared among the requested leading eigenpairs."""


class NumericalBreakdown(EmbgpError):
    """Symmetric factorization failed even after the jitter retry."""


class DimensionError(EmbgpError):
    """Vector/matrix dimensions inconsistent with the operation."""


class ModelOverflow(EmbgpError):
    """Model evaluation would overflow double precision (exp argument > 700)."""


class DomainError(EmbgpError):
    """Requested evaluation point lies outside the model's domain/grid."""


class NonConvergence(EmbgpError):
    """Iterative optimization failed to reach its tolerance.

    Carries ``best`` (the best iterate found) when one exists.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateConstraints(EmbgpError):
    """Constraint Gram matrix is singular; ``null_direction`` names the cause."""

    def __init__(self, message, null_direction=None):
        super().__init__(message)
        self.null_direction = null_direction


class EmptyLis(EmbgpError):
    """No eigenvalue of the preconditioned Hessian reached the cutoff."""


class EvaluationFailure(EmbgpError):
    """Model or Jacobian evaluation failed at the requested point."""


class BadInit(EmbgpError):
    """Sampler initial state has zero posterior density."""


class StuckChain(EmbgpError):
    """Sampler rejected every proposal for too many consecutive steps."""


class DegenerateChain(EmbgpError):
    """Chain coordinate is constant; diagnostics undefined."""


class ComparisonError(EmbgpError):
    """Run directories cannot be compared (wrong count or incompatible runs)."""


class ConfigError(EmbgpError):
    """Experiment configuration failed schema validation.

    ``field`` holds a dotted path to the offending entry when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
