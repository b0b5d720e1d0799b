"""Exception types shared across the package."""


class QbnnError(Exception):
    pass


class ZeroNormVector(QbnnError, ValueError):
    pass


class DimensionMismatch(QbnnError, ValueError):
    pass


class DomainError(QbnnError, ValueError):
    pass


class NonFiniteValue(QbnnError, ArithmeticError):
    pass


class RankTooLarge(QbnnError, ValueError):
    pass


class IncompleteTelemetry(QbnnError, ValueError):
    pass


class EmptyInput(QbnnError, ValueError):
    pass


class DegenerateCenters(QbnnError, ValueError):
    pass


class EmptyFile(QbnnError, ValueError):
    pass


class TooFewRows(QbnnError, ValueError):
    pass


class ParseError(QbnnError, ValueError):
    def __init__(self, row, column, message):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column}: {message}")


class ConfigError(QbnnError, ValueError):
    """Invalid configuration; ``key`` names the offending field."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
