"""Exception types shared across the package."""


class GpmmmError(Exception):
    """Base class for all package errors."""


class DomainError(GpmmmError, ValueError):
    """Invalid argument values (non-finite inputs, violated preconditions)."""


class FactorizationError(GpmmmError):
    """Cholesky factorization failed after exhausting the jitter ladder."""


class FitError(GpmmmError):
    """Hyperparameter or curve fitting failed on every attempt."""


class SamplerError(GpmmmError):
    """MCMC sampler produced no usable draws."""


class InfeasibleError(GpmmmError):
    """Every optimization candidate was filtered out by a feasibility rule."""


class UnboundedProfitError(GpmmmError):
    """The closed-form spend optimum does not exist (elasticity >= 1)."""


class DatasetError(GpmmmError, ValueError):
    """Dataset file or schema violation; message carries the location."""
