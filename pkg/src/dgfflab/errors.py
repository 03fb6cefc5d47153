"""Exception hierarchy shared by all dgfflab modules."""


class DGFFLabError(Exception):
    """Base class for every error raised by dgfflab."""


class EmptyDiscretization(DGFFLabError):
    """No lattice point (or no connected, simply connected set) at this scale."""


class DisconnectedDiscretization(EmptyDiscretization):
    pass


class DegenerateInterior(DGFFLabError):
    """The requested delta-interior of a shape is empty or irregular."""


class NoConvergence(DGFFLabError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DomainTooLarge(DGFFLabError):
    pass


class StepBudgetExceeded(DGFFLabError):
    def __init__(self, message, count=0, replicas=0):
        super().__init__(message)
        self.count = count
        self.replicas = replicas


class HypothesisViolated(DGFFLabError):
    """Geometric preconditions of an escape bound do not hold."""


class EffectiveSampleSizeTooLow(DGFFLabError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ProbabilityUnderflow(DGFFLabError):
    def __init__(self, message, upper_bound=None, report=None):
        super().__init__(message)
        self.upper_bound = upper_bound
        self.report = report


class ConfigInvalid(DGFFLabError):
    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
