"""Exception types shared across the package."""


class WaveCauchyError(Exception):
    """Base class for all package errors."""


class UnstableRegimeError(WaveCauchyError, ArithmeticError):
    """A kernel representation would need exp() beyond the configured cap.

    Raised by the exponentially growing forms of w_h (and anything built on
    them) instead of returning inf or a cancellation-dominated number.  The
    stable radial kernel has no such regime.
    """

    def __init__(self, max_exponent, cap):
        self.max_exponent = float(max_exponent)
        self.cap = float(cap)
        super().__init__(
            f"unstable regime: exponent {self.max_exponent:.1f} exceeds cap "
            f"{self.cap:.1f}; use the stable V_h path"
        )


class SingularPointError(WaveCauchyError, ValueError):
    """Evaluation requested at a point where the function is singular."""


class DomainError(WaveCauchyError, ValueError):
    """A point lies outside the admissible region of an operation."""


class WindowCoverageError(WaveCauchyError, ValueError):
    """The trace time window does not cover the kernel support."""


class TargetOutsideDomainError(WaveCauchyError, ValueError):
    """Reconstruction target is not strictly inside the domain."""


class CoverageError(WaveCauchyError, ValueError):
    """A partial-boundary arc misses part of the cone footprint."""


class TraceFormatError(WaveCauchyError, ValueError):
    """A trace or results file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(WaveCauchyError, ValueError):
    """Invalid run configuration; ``key`` is the offending key path."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class CFLError(WaveCauchyError, ValueError):
    """Time step violates the leapfrog stability limit."""


class DivergenceError(WaveCauchyError, ArithmeticError):
    """A time-stepping run produced non-finite values."""

    def __init__(self, step, message="non-finite field"):
        self.step = step
        super().__init__(f"step {step}: {message}")
