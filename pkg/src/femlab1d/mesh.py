"""Partitions of the unit interval and affine reference-element maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidPartitionError

DEFAULT_QUASI_UNIFORMITY_BOUND = 4.0


@dataclass(frozen=True)
class Partition:
    """Ordered knots 0 = x_0 < x_1 < ... < x_N = 1 of the unit interval."""

    knots: np.ndarray
    quasi_uniformity_bound: float = DEFAULT_QUASI_UNIFORMITY_BOUND

    def __post_init__(self):
        knots = np.ascontiguousarray(self.knots, dtype=float)
        if knots.ndim != 1 or knots.size < 3:
            raise InvalidPartitionError("need at least 2 elements (3 knots)")
        if abs(knots[0]) > 0.0 or abs(knots[-1] - 1.0) > 0.0:
            raise InvalidPartitionError("knots must start at 0 and end at 1")
        lengths = np.diff(knots)
        if np.any(lengths <= 0.0):
            raise InvalidPartitionError("knots must be strictly increasing")
        ratio = lengths.max() / lengths.min()
        if ratio > self.quasi_uniformity_bound:
            raise InvalidPartitionError(
                f"quasi-uniformity ratio {ratio:.3g} exceeds bound "
                f"{self.quasi_uniformity_bound:.3g}"
            )
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def element_count(self) -> int:
        return self.knots.size - 1

    @property
    def element_lengths(self) -> np.ndarray:
        return np.diff(self.knots)

    @property
    def h_max(self) -> float:
        return float(self.element_lengths.max())

    @property
    def h_min(self) -> float:
        return float(self.element_lengths.min())

    @property
    def interior_knots(self) -> np.ndarray:
        return self.knots[1:-1]


def build_uniform_partition(n: int) -> Partition:
    """n equal elements on [0, 1]; requires n >= 2."""
    if n < 2:
        raise InvalidPartitionError(f"element count must be >= 2, got {n}")
    return Partition(np.linspace(0.0, 1.0, n + 1))


def build_perturbed_partition(
    n: int,
    amplitude: float,
    seed: int,
    quasi_uniformity_bound: float = DEFAULT_QUASI_UNIFORMITY_BOUND,
) -> Partition:
    """Uniform partition with interior knots displaced by at most amplitude*h.

    Displacements are drawn deterministically from `seed`, so repeated calls
    with the same arguments give identical partitions.  amplitude must be
    below 0.5 or knot ordering could break.
    """
    if not 0.0 <= amplitude < 0.5:
        raise InvalidPartitionError(
            f"perturbation amplitude must be in [0, 0.5), got {amplitude}"
        )
    if n < 2:
        raise InvalidPartitionError(f"element count must be >= 2, got {n}")
    h = 1.0 / n
    knots = np.linspace(0.0, 1.0, n + 1)
    rng = np.random.default_rng(seed)
    knots[1:-1] += rng.uniform(-amplitude * h, amplitude * h, n - 1)
    return Partition(knots, quasi_uniformity_bound)


def map_to_element(partition: Partition, elem: int, ref_point):
    """Affine map from the reference interval [-1, 1] onto element `elem`.

    Returns (x, jac) with x = midpoint + ref_point * h/2 and jac = h/2.
    """
    n = partition.element_count
    if not 0 <= elem < n:
        raise IndexError(f"element index {elem} out of range [0, {n})")
    a = partition.knots[elem]
    b = partition.knots[elem + 1]
    jac = 0.5 * (b - a)
    x = 0.5 * (a + b) + jac * np.asarray(ref_point, dtype=float)
    return (float(x), jac) if x.ndim == 0 else (x, jac)
