"""Exception types raised across the package."""


class DpmErgmError(Exception):
    """Base class for package errors."""


class ParseError(DpmErgmError, ValueError):
    """A data file could not be parsed.

    The message always names the offending file and, where known, the line.
    """

    def __init__(self, path, message, line=None):
        self.path = str(path)
        self.line = line
        where = self.path if line is None else f"{self.path}:{line}"
        super().__init__(f"{where}: {message}")


class StructuralError(DpmErgmError, ValueError):
    """Input parsed but violates a structural invariant (self-loop, size mismatch...)."""


class SpecError(DpmErgmError, ValueError):
    """Model terms are inconsistent with the graph, covariates or theta they are used with."""


class DomainError(DpmErgmError, ValueError):
    """An argument lies outside the domain of an operation."""


class CapacityError(DpmErgmError, ValueError):
    """A request exceeds a hard size bound (e.g. exhaustive enumeration)."""


class ConfigError(DpmErgmError, ValueError):
    """Run configuration failed validation.

    ``problems`` holds ``(field, message)`` pairs.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        text = "; ".join(f"{f}: {m}" for f, m in self.problems)
        super().__init__(text or "invalid configuration")
