"""Error taxonomy shared by all modules.

Every failure mode maps to one category string so the CLI can report
machine-readable errors on stderr.
"""


class ToolError(Exception):
    """Base class for all errors raised by this package."""

    category = "error"


class FormatError(ToolError):
    """Malformed serialized data (files, wire payloads)."""

    category = "format"


class BadMagicError(FormatError):
    category = "format/bad-magic"


class UnsupportedVersionError(FormatError):
    category = "format/unsupported-version"


class TruncatedPayloadError(FormatError):
    category = "format/truncated"


class InvalidValueError(ToolError):
    """Value-level invariant violations: NaN, negative mass, bad sums."""

    category = "invalid-value"


class ShapeError(ToolError):
    """Dimension mismatches between cooperating arrays."""

    category = "shape"


class ConfigError(ToolError):
    """Invalid configuration or parameter ranges."""

    category = "config"


class NumericalError(ToolError):
    """Optimization produced a non-finite quantity."""

    category = "numerical"


class DegenerateError(ToolError):
    """A result that is mathematically undefined for the given input."""

    category = "degenerate"
