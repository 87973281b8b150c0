"""Exception hierarchy shared across the package.

Configuration problems raise :class:`ConfigError`; everything numerical or
physical derives from :class:`RamanError` so callers (and the CLI exit-code
logic) can tell the two apart.
"""


class RamanError(Exception):
    """Base class for numerical / physical failures."""


class InvalidParameterError(RamanError, ValueError):
    """An argument violates a documented precondition."""


class InvalidStateError(RamanError, ValueError):
    """A state vector is not normalized or otherwise malformed."""


class DegenerateResonanceError(RamanError):
    """An intermediate-state denominator fell below the safe tolerance."""


class InsufficientDurationError(RamanError):
    """A trajectory is too short for the requested analysis."""


class ExtractionFailedError(RamanError):
    """No usable spectral peak found in a trajectory."""


class IterationFailedError(RamanError):
    """A fixed-point or root solve did not converge."""


class LabelingAmbiguityError(RamanError):
    """Dressed-level labels cannot be tracked adiabatically."""


class FitFailedError(RamanError):
    """A least-squares fit did not converge; diagnostics attached."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnderconstrainedFitError(RamanError):
    """The fit Jacobian is rank deficient.

    ``null_directions`` holds unit vectors (in parameter order) spanning the
    unconstrained subspace.
    """

    def __init__(self, message, null_directions=()):
        super().__init__(message)
        self.null_directions = tuple(null_directions)


class InconsistentMeasurementError(RamanError):
    """A measurement cannot be inverted to a physical parameter value."""


class ApproximationRegimeWarning(UserWarning):
    """Emitted when a perturbative formula is evaluated outside its regime."""


class ConfigError(Exception):
    """Bad experiment configuration (file syntax, missing keys, bad values)."""
