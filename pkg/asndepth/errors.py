"""Exception hierarchy shared by every asndepth module."""

from __future__ import annotations


class AsnError(Exception):
    """Base class for all asndepth errors."""


class ContractError(AsnError, ValueError):
    """Inputs disagree in shape or violate a raster invariant."""


class DomainError(AsnError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericalError(AsnError, ArithmeticError):
    """A reduction or estimate has nothing to work on (e.g. empty joint mask)."""


class ParseError(AsnError, ValueError):
    """Malformed file. ``offset`` is the byte offset (binary) or line number (text)."""

    def __init__(self, message: str, offset: int, path: str | None = None) -> None:
        self.offset = offset
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} (at offset {offset})")
