"""Exception types raised across the lensqc pipeline."""


class LensQcError(Exception):
    """Base class for all lensqc errors."""


# --- image ingest ---

class UnsupportedFormatError(LensQcError):
    """File is not a PNG or JPEG image."""


class ImageTooSmallError(LensQcError):
    """Image is smaller than the 9x9 minimum required by the filter bank."""


# --- filter bank ---

class InvalidRadiusError(LensQcError):
    """Gaussian kernel radius below 1."""


class ShapeMismatchError(LensQcError):
    """Field shapes do not agree."""


class NonPositiveEpsilonError(LensQcError):
    """Contrast-normalization constant must be > 0."""


class ImageTooNarrowError(LensQcError):
    """Width < 2, no horizontal neighbor products exist."""


# --- feature extraction ---

class EmptyFieldError(LensQcError):
    """Moment computation on an empty field."""


class InsufficientDataError(LensQcError):
    """Standardizer needs at least two feature vectors."""


class NotFittedError(LensQcError):
    """Standardizer used before fitting."""


class FeatureOrderError(LensQcError):
    """Serialized feature order does not match this build's feature order."""


# --- classifier ---

class DimensionMismatchError(LensQcError):
    """Feature vector dimension differs from the model's."""


class SingleClassDataError(LensQcError):
    """Training data contains fewer than two classes."""


class ClassTooSmallError(LensQcError):
    """A class has too few samples for the requested operation."""


class ModelFormatError(LensQcError):
    """Model file is malformed or has an unsupported version."""


# --- dataset / evaluation ---

class ManifestParseError(LensQcError):
    """Malformed manifest line; carries the 1-based line number."""

    def __init__(self, message, line_no=None):
        super().__init__(message)
        self.line_no = line_no


class DuplicatePathError(LensQcError):
    """Manifest lists the same image path twice."""


class UnknownLabelError(LensQcError):
    """Manifest label outside the declared label set."""


class EmptyResultError(LensQcError):
    """A manifest filter matched no entries."""


class LabelMismatchError(LensQcError):
    """Evaluation labels are not covered by the model's class labels."""
