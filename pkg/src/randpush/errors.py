"""Exception types shared across the package."""


class RandPushError(Exception):
    """Base class for all package errors."""


class DimensionError(RandPushError, ValueError):
    pass


class InvalidEnsembleError(RandPushError, ValueError):
    def __init__(self, report):
        self.report = report
        super().__init__("invalid ensemble: " + "; ".join(report.failures))


class ContractViolation(RandPushError, ValueError):
    pass


class DomainError(RandPushError, ValueError):
    pass


class ScheduleViolation(RandPushError, ValueError):
    """A perturbation exceeded its norm envelope."""


class ConfigError(RandPushError, ValueError):
    pass


class FitError(RandPushError, ValueError):
    pass
