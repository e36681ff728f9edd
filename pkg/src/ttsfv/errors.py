"""Exception hierarchy shared across the package."""


class TTSFVError(Exception):
    """Base class for all package errors."""


class ShapeError(TTSFVError, ValueError):
    """Mode sizes, ranks or weight lengths do not match."""


class DegeneracyError(TTSFVError, ValueError):
    """A matrix expected to have full column rank is rank deficient."""


class EvaluationError(TTSFVError):
    """An entry oracle produced an unusable value.

    ``index`` holds the offending multi-index when it is known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = None if index is None else tuple(int(i) for i in index)


class AdmissibilityError(EvaluationError):
    """A physical state has nonpositive density or pressure."""

    def __init__(self, message, index=None, location=None):
        super().__init__(message, index)
        self.location = location

    def __str__(self):
        msg = super().__str__()
        if self.location:
            msg = f"{msg} [{self.location}]"
        return msg


class ConfigurationError(TTSFVError, ValueError):
    """Invalid experiment or model configuration.

    ``violations`` lists every problem found, not just the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ResourceError(TTSFVError, MemoryError):
    """A memory guard refused to allocate a dense object."""
