"""Exception types shared across the toolkit.

Everything user-facing derives from ValueError or RuntimeError so callers
that do not care about the fine-grained type can still catch broadly.
"""


class ParseError(ValueError):
    """A dataset file could not be parsed; message carries the line number."""


class ValidationError(ValueError):
    """Parsed data violates a structural invariant (e.g. gap in cycle numbers)."""


class ConfigError(ValueError):
    """A configuration value is out of its legal range."""


class ShapeError(ValueError):
    """Array shapes are incompatible for the requested operation."""


class TrainingError(RuntimeError):
    """Training aborted: non-finite loss or gradient, with diagnostics."""
