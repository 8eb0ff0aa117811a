"""Banded matrix storage with LU factorization and triangular solves.

Storage keeps the 2*hb+1 diagonals of a square matrix with half-bandwidth
hb; writes outside the band are rejected.  Factorization is LAPACK's
banded LU with partial pivoting (dgbtrf/dgbtrs), which pivots inside an
expanded band of width 3*hb+1, so U fill stays within 2*hb superdiagonals.
The test suite cross-checks against dense oracles.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .exceptions import BandwidthError, DimensionError, SingularMatrixError

_PIVOT_RTOL = 1e-14


class BandedMatrix:
    """Square matrix of which only the |i-j| <= half_bandwidth entries exist.

    band[half_bandwidth + i - j, j] holds A[i, j].
    """

    __slots__ = ("dim", "half_bandwidth", "band")

    def __init__(self, dim: int, half_bandwidth: int, band: np.ndarray | None = None):
        if dim < 1 or half_bandwidth < 0:
            raise DimensionError(f"bad banded shape ({dim}, hb={half_bandwidth})")
        self.dim = dim
        self.half_bandwidth = half_bandwidth
        if band is None:
            band = np.zeros((2 * half_bandwidth + 1, dim))
        else:
            band = np.ascontiguousarray(band, dtype=float)
            if band.shape != (2 * half_bandwidth + 1, dim):
                raise DimensionError(
                    f"band storage shape {band.shape} does not match "
                    f"(2*{half_bandwidth}+1, {dim})"
                )
        self.band = band

    def add_entry(self, i: int, j: int, v: float) -> None:
        """Accumulate v into A[i, j]."""
        if not (0 <= i < self.dim and 0 <= j < self.dim):
            raise DimensionError(f"index ({i}, {j}) outside a {self.dim}-dim matrix")
        if abs(i - j) > self.half_bandwidth:
            raise BandwidthError(
                f"write at ({i}, {j}) outside half-bandwidth {self.half_bandwidth}"
            )
        self.band[self.half_bandwidth + i - j, j] += v

    def scatter_add(self, rows, cols, values) -> None:
        """Vectorised accumulation of values into positions (rows, cols)."""
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        if rows.size == 0:
            return
        if rows.min() < 0 or cols.min() < 0 or max(rows.max(), cols.max()) >= self.dim:
            raise DimensionError("scatter indices outside matrix")
        if np.any(np.abs(rows - cols) > self.half_bandwidth):
            raise BandwidthError("scatter outside the band")
        np.add.at(self.band, (self.half_bandwidth + rows - cols, cols), values)

    def entry(self, i: int, j: int) -> float:
        if abs(i - j) > self.half_bandwidth:
            return 0.0
        return float(self.band[self.half_bandwidth + i - j, j])

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionError(
                f"operand of length {x.size} for a {self.dim}-dim matrix"
            )
        hb = self.half_bandwidth
        y = np.zeros(self.dim)
        for d in range(-hb, hb + 1):
            j0 = max(0, -d)
            j1 = self.dim - max(0, d)
            if j1 > j0:
                y[j0 + d : j1 + d] += self.band[hb + d, j0:j1] * x[j0:j1]
        return y

    def to_dense(self) -> np.ndarray:
        hb = self.half_bandwidth
        dense = np.zeros((self.dim, self.dim))
        for d in range(-hb, hb + 1):
            j0 = max(0, -d)
            j1 = self.dim - max(0, d)
            for j in range(j0, j1):
                dense[j + d, j] = self.band[hb + d, j]
        return dense

    def copy(self) -> "BandedMatrix":
        return BandedMatrix(self.dim, self.half_bandwidth, self.band.copy())


@dataclass(frozen=True)
class BandedLU:
    """LAPACK banded LU factors (pivots 0-based as returned by scipy)."""

    factors: np.ndarray
    pivots: np.ndarray
    half_bandwidth: int
    dim: int


def lu_factor(m: BandedMatrix) -> BandedLU:
    """Banded LU with partial pivoting; rejects numerically singular input."""
    hb, dim = m.half_bandwidth, m.dim
    ab = np.zeros((3 * hb + 1, dim))
    ab[hb:, :] = m.band
    factors, pivots, info = lapack.dgbtrf(ab, hb, hb)
    if info < 0:
        raise ValueError(f"dgbtrf: illegal argument {-info}")
    max_abs = float(np.abs(m.band).max())
    u_diag = np.abs(factors[2 * hb, :])
    if info > 0 or (max_abs == 0.0) or u_diag.min() < _PIVOT_RTOL * max_abs:
        raise SingularMatrixError(
            f"numerically singular banded matrix (dim {dim}, hb {hb})"
        )
    return BandedLU(factors=factors, pivots=pivots, half_bandwidth=hb, dim=dim)


def solve(lu: BandedLU, rhs) -> np.ndarray:
    """Solve A x = rhs using the factors; rhs may be a vector or a matrix."""
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != lu.dim:
        raise DimensionError(f"rhs of length {b.shape[0]} for dim {lu.dim}")
    x, info = lapack.dgbtrs(lu.factors, lu.half_bandwidth, lu.half_bandwidth, b, lu.pivots)
    if info != 0:
        raise ValueError(f"dgbtrs: info {info}")
    return x


def matvec(m: BandedMatrix, x) -> np.ndarray:
    return m.matvec(x)
