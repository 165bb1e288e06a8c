"""Exception types shared across the package."""
from __future__ import annotations


class SchoolError(Exception):
    """Base class for all package-specific errors."""


class ZeroVectorError(SchoolError):
    """An operation received a zero (or sub-epsilon) vector where a direction is required."""


class DimensionMismatchError(SchoolError):
    """Array arguments disagree in length or shape."""


class WeightError(SchoolError):
    """A weight vector is negative, non-finite, or does not sum to one."""


class CoincidentFishError(SchoolError):
    """Two fish occupy the same position, which the zonal model cannot classify."""

    def __init__(self, i: int, j: int):
        super().__init__(f"fish {i} and {j} are coincident")
        self.pair = (i, j)


class NotStronglyConnectedError(SchoolError):
    """Centrality weights were requested on a graph that is not strongly connected."""


class ZeroOrientationDegreeError(SchoolError):
    """Aggregation was requested while some fish has an empty orientation set."""

    def __init__(self, indices):
        super().__init__(f"fish with empty orientation sets: {list(indices)}")
        self.indices = list(indices)


class AssumptionViolatedError(SchoolError):
    """A state does not satisfy the preconditions of the error-bound analysis.

    ``condition`` names the failed assumption; ``fish`` is the offending index
    when the condition is per-fish.
    """

    def __init__(self, condition: str, fish: int | None = None):
        msg = condition if fish is None else f"{condition} (fish {fish})"
        super().__init__(msg)
        self.condition = condition
        self.fish = fish


class ZeroArgumentError(SchoolError):
    """The reduced-direction update received a degenerate normalization argument."""


class InvariantViolationError(SchoolError):
    """A controller protocol invariant failed at runtime."""


class ConfigError(SchoolError):
    """A scenario configuration is malformed."""
