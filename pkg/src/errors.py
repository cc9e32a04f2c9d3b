"""Exception hierarchy shared by the library modules.

Library code raises these; only the CLI entry points translate them
into exit codes.
"""


class BsdaError(ValueError):
    """Base class for every domain error raised by the library."""
    pass


# === Geometry / targets ===


class EmptyFeatureSet(BsdaError):
    """Raised when a distance transform has no zero-distance pixel."""
    pass


class EmptyForeground(BsdaError):
    """Raised when a mask needs foreground pixels but has none."""
    pass


class InvalidSigma(BsdaError):
    """Raised when a Gaussian width is not strictly positive."""
    pass


class DimMismatch(BsdaError):
    """Raised when two grids that must align have different dims."""
    pass


class ValueOutOfRange(BsdaError):
    """Raised when a field holds values outside its allowed interval."""
    pass


# === Metrics ===


class EmptyList(BsdaError):
    """Raised when a surface-distance list is empty."""
    pass


class EmptyMatrix(BsdaError):
    """Raised when a confusion matrix has no observations."""
    pass


class DegenerateKappa(BsdaError):
    """Raised when chance agreement is 1 and kappa is undefined."""
    pass


# === Autodiff / model ===


class ShapeMismatch(BsdaError):
    """Raised when tensor shapes are incompatible for an op."""
    pass


class BatchTooSmall(BsdaError):
    """Raised when batch normalisation trains on fewer than two samples."""
    pass


class LabelOutOfRange(BsdaError):
    """Raised when a class label does not index the logits."""
    pass


class NonFiniteValue(BsdaError):
    """Raised in debug mode when an op produces NaN or Inf."""
    pass


class ResolutionMismatch(BsdaError):
    """Raised when fused decoder features do not match a classifier stage."""
    pass


class ConfigInvalid(BsdaError):
    """Raised when a run configuration violates its schema."""
    pass


class DataEmpty(BsdaError):
    """Raised when training is asked to run on an empty dataset."""
    pass


# === Data / files ===


class DegenerateShape(BsdaError):
    """Raised when the synthetic generator cannot produce a usable mask."""
    pass


class FormatError(BsdaError):
    """Raised when a PGM, BSDT or BSDC file is malformed."""
    pass


class FieldKindError(BsdaError):
    """Raised when an operation receives a field of the wrong kind."""
    pass
