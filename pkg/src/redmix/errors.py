"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when a configuration value is missing, unknown or out of range."""


class NumericalError(RuntimeError):
    """Raised when a computation leaves the regime where results are trustworthy."""


class BlowUpError(NumericalError):
    """Raised when an integrated state stops being finite.

    Carries the time inside the current segment at which the first
    non-finite entry appeared.
    """

    def __init__(self, time: float):
        self.time = time
        super().__init__(f"state became non-finite at segment time t={time:.6g}")
