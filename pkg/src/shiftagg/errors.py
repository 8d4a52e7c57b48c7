"""Shared exception and warning types."""


class DimensionError(ValueError):
    """Operands have incompatible or unexpected shapes."""


class NumericalError(RuntimeError):
    """A numerical routine failed (non-convergence, singular system, ...)."""


class DegenerateGramError(NumericalError):
    """Every Gram eigenvalue fell at or below the rcond cutoff."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""


class CsvFormatError(ValueError):
    """A CSV file violated the expected format.

    Carries the offending path and 1-based line number when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class DegenerateGramWarning(RuntimeWarning):
    """A Gram matrix lost all of its spectrum to the rcond cutoff."""
