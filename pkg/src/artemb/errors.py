"""Exception types shared across the toolkit.

The CLI maps ``ArtembError`` (and I/O errors) to exit code 1; anything
else is a bug and propagates.
"""


class ArtembError(Exception):
    """Base class for all domain errors raised by this package."""


class FormatError(ArtembError):
    """A file does not conform to its documented wire format."""


class ValidationError(ArtembError):
    """An in-memory object violates one of its invariants."""


class TrainingDivergedError(ArtembError):
    """Training produced a non-finite loss or gradient."""
