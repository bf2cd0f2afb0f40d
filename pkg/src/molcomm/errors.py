"""Exception types shared across the package."""


class MolcommError(Exception):
    """Base class for all package errors."""


class DomainError(MolcommError, ValueError):
    """An argument is outside the physical or mathematical domain of an operation."""


class ConfigurationError(MolcommError, ValueError):
    """A configuration file or run specification is invalid.

    Carries a list of ``(key_path, message)`` pairs so callers can report
    every violation with its dotted key path.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [("", problems)]
        self.problems = list(problems)
        lines = [f"{path}: {msg}" if path else msg for path, msg in self.problems]
        super().__init__("; ".join(lines))


class NumericsError(MolcommError, ArithmeticError):
    """A numerical routine failed to converge or produced an inconsistent result."""
