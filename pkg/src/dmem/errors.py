"""Exception hierarchy shared by the library and the CLI."""


class DMEMError(ValueError):
    """Base class for all errors raised by this package."""


class InvalidArgument(DMEMError):
    """An argument violates an operation's precondition."""


class ModelSpaceTooLarge(DMEMError):
    """A full MEM fit was requested over more sources than the enumeration guard allows."""


class DataFormatError(DMEMError):
    """An input file could not be parsed (missing columns, non-numeric cells)."""


class DataValidationError(DMEMError):
    """An input file parsed but its contents violate the data contract."""
