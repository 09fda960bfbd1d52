"""Exception hierarchy shared across the package."""


class MpmError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MpmError):
    """A configuration value violates its documented range."""


class InputError(MpmError):
    """Input data violates a precondition (bad annotation, bad pair, ...)."""


class PairError(InputError):
    """An (annotation_t, annotation_prev) pair is inconsistent with the
    requested frame gap or falls outside the grid."""


class NoMotionError(MpmError):
    """The vector at a detection pixel carries no usable motion
    information (zero magnitude or non-positive time component)."""


class SequenceError(MpmError):
    """A field required to process a frame pair is unavailable."""


class GenerationError(MpmError):
    """The simulator could not satisfy its packing constraints."""


class FormatError(InputError):
    """A file does not conform to its declared format."""
