"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """A value lies outside the domain of an operation."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class VariantError(ContractError):
    """The operation is not valid for this model variant."""


class EmptyMemoryError(RuntimeError):
    """Sampling was requested from a memory with no stored samples."""


class FormatError(ValueError):
    """A binary file could not be parsed.

    ``offset`` is the byte position where parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
