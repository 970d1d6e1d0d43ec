"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class SdeMomentsError(Exception):
    """Base class for library errors."""


class ConfigError(SdeMomentsError, ValueError):
    """Invalid run configuration or inconsistent input shapes."""


class NumericalError(SdeMomentsError, ArithmeticError):
    """Non-finite values or an evaluation singularity during a computation.

    ``step`` and ``sample`` carry the failing time-step and sample index when
    they are known.
    """

    def __init__(self, message: str, step: int | None = None, sample: int | None = None):
        parts = [message]
        if step is not None:
            parts.append(f"step={step}")
        if sample is not None:
            parts.append(f"sample={sample}")
        super().__init__(", ".join(parts))
        self.step = step
        self.sample = sample


class RankDeficiencyError(SdeMomentsError, ArithmeticError):
    """Least-squares design matrix is (numerically) rank deficient."""

    def __init__(self, message: str, condition_number: float):
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


class DegenerateDensityError(SdeMomentsError, ArithmeticError):
    """A density parameter is degenerate, e.g. a zero auxiliary deviation."""
