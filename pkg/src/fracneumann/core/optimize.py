import dataclasses
import logging
from collections.abc import Callable, Sequence

import numpy as np

from fracneumann.core.mesh import FloatArray

logger = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
MAX_BACKTRACKS = 60
MIN_STEP = 1e-12
MAX_STEP = 1e12


@dataclasses.dataclass(frozen=True)
class AscentSettings:
    multistarts: int = 50
    max_iterations: int = 5000
    tolerance: float = 1e-9

    def __post_init__(self) -> None:
        if self.multistarts < 0:
            raise ValueError(f"multistarts must be nonnegative, got {self.multistarts}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be positive, got {self.max_iterations}")
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")


@dataclasses.dataclass(frozen=True)
class LineSearchResult:
    step: float
    point: FloatArray
    value: float


def armijo_backtrack(
    objective: Callable[[FloatArray], float],
    trial: Callable[[float], FloatArray],
    value: float,
    slope: float,
    step: float,
) -> LineSearchResult | None:
    """Halve `step` until objective(trial(step)) <= value - c1 * step * slope.

    `slope` is the (positive) decrease rate along the search direction. Returns None when no step is accepted.
    """
    for _ in range(MAX_BACKTRACKS):
        point = trial(step)
        candidate = objective(point)
        if np.isfinite(candidate) and candidate <= value - ARMIJO_C1 * step * slope:
            return LineSearchResult(step, point, candidate)
        step *= 0.5
    return None


def barzilai_borwein(step: FloatArray, change: FloatArray, metric: FloatArray | None = None) -> float | None:
    """Long BB step s.Ms / |s.y|, clipped to a sane range; None when the curvature pair is unusable.

    A one-dimensional `metric` is read as a diagonal.
    """
    curvature = abs(float(step @ change))
    if curvature == 0 or not np.isfinite(curvature):
        return None
    if metric is None:
        length = float(step @ step)
    elif metric.ndim == 1:
        length = float(step @ (metric * step))
    else:
        length = float(step @ metric @ step)
    return float(np.clip(length / curvature, MIN_STEP, MAX_STEP))


def best_index(values: Sequence[float]) -> int:
    """Index of the largest value, the lowest index winning ties."""
    return max(range(len(values)), key=lambda i: (values[i], -i))
