"""Exception types shared across the package."""


class RetrosimError(Exception):
    """Base class for all errors raised by retrosim."""


class DegenerateInput(RetrosimError, ValueError):
    pass


class LayoutMismatch(RetrosimError, ValueError):
    pass


class InvalidState(RetrosimError, ValueError):
    """A matrix failed the structural checks of the type it was built as."""


class NumericIntegrityError(RetrosimError, ArithmeticError):
    """A quantity that must be real came out with a non-negligible imaginary part."""


class ZeroProbabilityOutcome(RetrosimError, ValueError):
    """The requested branch is impossible; callers prune it instead of dividing."""


class FamilyIncomplete(RetrosimError, ValueError):
    pass


class NonCommutingCondition(RetrosimError, ValueError):
    pass


class ScheduleMismatch(RetrosimError, ValueError):
    pass


class ProtocolMalformed(RetrosimError, ValueError):
    pass


class ConfigError(RetrosimError, ValueError):
    """Invalid run configuration; ``line``/``column`` are set for parse failures."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column
