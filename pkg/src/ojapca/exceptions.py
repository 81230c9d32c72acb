"""Exception hierarchy shared across the package."""


class OjaError(Exception):
    """Base class for every error raised by ojapca."""


# numerical core
class RankDeficient(OjaError, ValueError):
    pass


class NoConvergence(OjaError, ArithmeticError):
    pass


class NotSymmetric(OjaError, ValueError):
    pass


class NotOrthonormal(OjaError, ValueError):
    pass


class HeadSingular(OjaError, ArithmeticError):
    """The leading p x p block is numerically singular, so the chart map is undefined."""


# engine
class BadDims(OjaError, ValueError):
    pass


class NonFinite(OjaError, ArithmeticError):
    pass


class StreamExhausted(OjaError, RuntimeError):
    pass


# spectra and theory
class GapViolation(OjaError, ValueError):
    pass


class ThresholdOutOfRange(OjaError, ValueError):
    pass


class StepTooLarge(OjaError, ValueError):
    pass


# rate fitting
class TooFewPoints(OjaError, ValueError):
    pass


class NonPositiveError(OjaError, ValueError):
    pass


# configuration
class ConfigError(OjaError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ConfigError, ValueError):
    pass


# ingestion
class IngestError(OjaError, ValueError):
    pass


class BadHeader(IngestError):
    pass


class RowLengthMismatch(IngestError):
    def __init__(self, line, expected, got):
        self.line = line
        super().__init__(f"line {line}: expected {expected} fields, got {got}")


class NonFiniteValue(IngestError):
    def __init__(self, line):
        self.line = line
        super().__init__(f"line {line}: non-finite value")


class DegenerateSpectrum(UserWarning):
    """Empirical eigengap at the target rank is (numerically) zero."""
