import math
from typing import Any, Optional


class AspError(Exception):
    """Base class of every error raised by aspsim."""


class DomainError(AspError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class OutOfSupportError(DomainError):
    """A state is not reachable under the generating law."""


class InvalidGeneratorError(DomainError):
    """An Archimedean generator failed validation."""


class UnsupportedOperationError(AspError, NotImplementedError):
    """The operation is not defined for the given input (e.g. density of an atomic law)."""


class NumericError(AspError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance.

    Attributes:
        diagnostics: Free-form details of the failure (partial sums, error
            estimates, iteration counts) for logging and reports.
    """

    def __init__(self, message: str, diagnostics: Optional[dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(AspError, ValueError):
    """A RunConfig document is invalid.

    Attributes:
        line: 1-based line of the offending key in the source file, when known.
        source: Name of the source file, when known.
    """

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None) -> None:
        super().__init__(message)
        self.line = line
        self.source = source

    def anchored(self) -> str:
        """Return the message prefixed with ``file:line:`` like a compiler diagnostic."""
        where = self.source or "<config>"
        if self.line is not None:
            where = "{}:{}".format(where, self.line)
        return "{}: {}".format(where, self.args[0])


def comp(a: float, b: float, op: str) -> bool:
    """Compare a statistic against a threshold using the specified operator.

    Validation suites report ``(statistic, threshold, op)`` triples; this is the
    single place where such a triple is turned into pass/fail.  A NaN statistic
    never passes.

    Args:
        a: The observed statistic
        b: The threshold
        op: Comparison operator - one of "<", "<=", ">", ">=", "="

    Returns:
        True if the comparison holds, False otherwise

    Raises:
        TypeError: If the operator is not supported

    Example:
        >>> comp(0.01, 0.016, "<=")
        True
    """
    if math.isnan(a) or math.isnan(b):
        return False
    if op == "<":
        return a < b
    elif op == "<=":
        return a <= b
    elif op == ">":
        return a > b
    elif op == ">=":
        return a >= b
    elif op == "=":
        return a == b
    else:
        raise TypeError(
            f"Unsupported operator '{op}'. Supported operators: <, <=, >, >=, ="
        )


def fmt_real(x: float) -> str:
    """Format a real with 17 significant digits, the CSV convention of the CLI."""
    return "%.17g" % x


def check_positive(name: str, value: float) -> float:
    """Return ``value`` as float, raising DomainError unless it is finite and > 0."""
    v = float(value)
    if not math.isfinite(v) or v <= 0.0:
        raise DomainError("{} must be a positive finite real, got {!r}".format(name, value))
    return v


def check_unit_interval(name: str, value: float) -> float:
    v = float(value)
    if not (0.0 <= v <= 1.0):
        raise DomainError("{} must lie in [0, 1], got {!r}".format(name, value))
    return v
