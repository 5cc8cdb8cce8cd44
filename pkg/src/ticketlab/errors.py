"""Shared exception types.

Plain ValueError is used for ordinary bad-argument cases; the types here
mark conditions callers are expected to branch on (exit codes, retries).
"""


class TicketLabError(Exception):
    """Base class for package-specific failures."""


class ShapeError(TicketLabError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class StateError(TicketLabError, RuntimeError):
    """An object was used outside its legal lifecycle (dead tape, missing checkpoint)."""


class ConfigError(TicketLabError, ValueError):
    """A configuration value violates its documented constraints."""


class SchemaError(ConfigError):
    """A config document failed schema validation (unknown keys, wrong types)."""


class DataError(TicketLabError, ValueError):
    """A dataset or derived task is malformed or degenerate."""


class NumericError(TicketLabError, ArithmeticError):
    """A non-finite value appeared where the contract requires finite ones."""


class LoadError(TicketLabError, ValueError):
    """A persisted artifact is corrupt, truncated, or inconsistent with expectations."""
