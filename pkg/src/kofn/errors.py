"""Exception types shared across the package."""

from __future__ import annotations


class KofnError(Exception):
    """Base class for all package-specific errors."""


class DomainError(KofnError, ValueError):
    """An input value is outside its mathematical domain (p not in (0,1), r <= 0, ...)."""


class ContractError(KofnError, ValueError):
    """An internal contract between cooperating operations was violated."""


class ExpansionLimitError(KofnError, RuntimeError):
    """Expanding a routing to explicit permutations would exceed the cap."""

    def __init__(self, required: int, cap: int):
        super().__init__(
            f"expansion needs {required} permutations, above the cap of {cap}"
        )
        self.required = required
        self.cap = cap


class ParseError(KofnError, ValueError):
    """A text input failed to parse; carries the line number and field name."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"field '{field}': "
        super().__init__(prefix + message)
        self.line = line
        self.field = field
