"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit with 1 and
numerical failures exit with 2.
"""


class ValidationError(ValueError):
    """Invalid input: bad body parameters, malformed config, wrong shapes."""


class DomainError(ValidationError):
    """Argument outside the domain of an operation (zero vector, on a cut...)."""


class NumericError(RuntimeError):
    """A numerical procedure failed to converge or lost accuracy."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class OutOfRegionError(NumericError):
    """Requested point lies outside the certified continuation region."""


class CutProximityError(NumericError):
    """Requested point lies on or too close to a branch cut."""


class ResourceError(NumericError):
    """A tolerance cannot be met within the configured work budget."""
