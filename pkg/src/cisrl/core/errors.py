# errors — name the failure or it didn't happen

"""One exception per way this can go wrong. Library code raises, main.py catches."""


class CisRlError(Exception):
    """Base for everything we raise on purpose."""


class NumericOverflowError(CisRlError):
    """exp term blew up or the integrator produced inf/nan."""


class ConvergenceError(CisRlError):
    """Newton gave up. Caller should try another guess."""


class DimensionMismatchError(CisRlError):
    pass


class PolytopeError(CisRlError):
    """H-rep is malformed or unbounded."""


class DegenerateSetError(CisRlError):
    """Rejection sampling acceptance rate too low to be a real set."""


class EmptyKernelError(CisRlError):
    """Viability iteration removed every cell. trace = member count per sweep."""

    def __init__(self, message: str, trace: list[int]):
        super().__init__(message)
        self.trace = trace

    def __reduce__(self):
        return self.__class__, (self.args[0], self.trace)


class ExtractionError(CisRlError):
    """Shrunk below the floor and still failing verification. Set is probably non-convex."""


class EmptyTableError(CisRlError):
    pass


class UpdateAbortedError(CisRlError):
    """Non-finite loss during a PPO update. Weights were restored."""


class TrainingHaltedError(CisRlError):
    """Training stopped early. The partial curve rides along so it can still be written."""

    def __init__(self, message: str, curve):
        super().__init__(message)
        self.curve = curve

    def __reduce__(self):
        return self.__class__, (self.args[0], self.curve)


class SafetyFaultError(CisRlError):
    """Backup input failed re-certification. Must never happen on a verified set."""


class ConfigError(CisRlError):
    pass


class RewardSpecError(ConfigError):
    """Safe reward can drop to r2 or below somewhere in the set."""


class NoFeasibleSteadyStateError(CisRlError):
    pass


class LogMismatchError(CisRlError):
    """Summary numbers don't match what the step logs say."""
