"""Error contract shared by every layer of the library.

Class names follow the failure they signal rather than a generic Error
suffix, so callers can match on the condition by name.
"""


class KKLError(Exception):
    """Base class for all library-specific failures."""


class SingularMatrix(KKLError):
    """A pivot fell below the relative threshold during elimination."""


class DuplicateEigenvalues(KKLError):
    """Filter eigenvalues closer than the distinctness threshold."""


class SamplingFailure(KKLError):
    """Eigenvalue rejection sampling exhausted its attempt budget."""


class DomainEscape(KKLError):
    """An iterate left the admissible region (forward or backward)."""


class DegenerateDomain(KKLError):
    """A domain box with zero volume cannot support grid estimates."""


class StabilityViolation(KKLError):
    """A filter matrix is not a strict contraction."""


class EmptyWindow(KKLError):
    """An analysis window selected no usable trajectory rows."""


class AllZeroError(KKLError):
    """Regression on identically-zero errors is undefined."""


class ConfigError(KKLError):
    """A configuration document failed validation; message names the field."""


class InjectivityWarning(UserWarning):
    """Empirical injectivity margin is negligible; the transform is
    effectively non-injective and the eigenvalues should be resampled."""
