class MetricAxiomError(ValueError):
    """Raised when a distance matrix violates the metric axioms."""


class InstanceTooLargeError(ValueError):
    """Raised when an exhaustive computation is asked for more points than it allows."""

    def __init__(self, size: int, cap: int):
        super().__init__(f"Instance has {size} points; exhaustive search is capped at {cap}")
        self.size = size
        self.cap = cap


class NonErgodicChainError(ValueError):
    """Raised when a stationary distribution is requested for a non-ergodic chain."""


class HorizonExceededError(RuntimeError):
    """Raised when the variation threshold is not reached within the search horizon."""

    def __init__(self, t_max: int, threshold: float, profile: list[float]):
        super().__init__(
            f"Max-pair TV still {profile[-1]:.6g} > {threshold:.6g} at horizon t_max={t_max}"
        )
        self.t_max = t_max
        self.threshold = threshold
        self.profile = profile


class SamplerRestartError(RuntimeError):
    """Raised when the uniform-ball sampler voids more trials than allowed."""
