"""Degree-r C0 piecewise-polynomial space on a partition, vanishing at 0 and 1.

The local basis is the Lagrange basis at Gauss-Lobatto points of each
element (for conditioning at higher degree).  The two boundary degrees of
freedom are eliminated at construction, so every stored coefficient vector
lies in the zero-trace space; global DOFs are numbered left to right,
knot values shared between neighbouring elements.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    BoundaryMismatchError,
    DimensionError,
    DomainError,
    IncompatibleSpacesError,
    InvalidDegreeError,
)
from .mesh import Partition
from .quadrature import gauss_lobatto_nodes

_BOUNDARY_TOL = 1e-12
_DOMAIN_SLACK = 1e-12


def lagrange_basis(nodes: np.ndarray, pts) -> tuple[np.ndarray, np.ndarray]:
    """Values and first derivatives of the Lagrange basis for `nodes`.

    Returns arrays of shape (len(nodes), len(pts)).
    """
    nodes = np.asarray(nodes, dtype=float)
    pts = np.atleast_1d(np.asarray(pts, dtype=float))
    m = nodes.size
    values = np.ones((m, pts.size))
    derivs = np.zeros((m, pts.size))
    for j in range(m):
        denom = 1.0
        for k in range(m):
            if k != j:
                values[j] *= pts - nodes[k]
                denom *= nodes[j] - nodes[k]
        values[j] /= denom
        for i in range(m):
            if i == j:
                continue
            term = np.ones(pts.size)
            for k in range(m):
                if k != j and k != i:
                    term *= pts - nodes[k]
            derivs[j] += term
        derivs[j] /= denom
    return values, derivs


def eval_basis_ref(degree: int, ref_point: float) -> tuple[np.ndarray, np.ndarray]:
    """Local basis values and reference-coordinate derivatives at one point."""
    if degree < 1:
        raise InvalidDegreeError(f"degree must be >= 1, got {degree}")
    values, derivs = lagrange_basis(gauss_lobatto_nodes(degree + 1), [ref_point])
    return values[:, 0], derivs[:, 0]


@dataclass(frozen=True)
class FESpace:
    """C0 Lagrange space of degree `degree` with zero boundary trace."""

    partition: Partition
    degree: int
    nodes_ref: np.ndarray = field(repr=False)
    dof_map: np.ndarray = field(repr=False)
    dof_count: int

    def knot_dof(self, knot_index: int) -> int:
        """Global DOF of interior knot `knot_index` (1 .. N-1)."""
        n = self.partition.element_count
        if not 1 <= knot_index <= n - 1:
            raise IndexError(f"interior knot index {knot_index} out of range")
        return knot_index * self.degree - 1

    def compatible_with(self, other: "FESpace") -> bool:
        return (
            self.degree == other.degree
            and self.partition.knots.shape == other.partition.knots.shape
            and bool(np.all(self.partition.knots == other.partition.knots))
        )


def build_space(partition: Partition, degree: int) -> FESpace:
    if degree < 1:
        raise InvalidDegreeError(f"degree must be >= 1, got {degree}")
    n = partition.element_count
    r = degree
    dof_map = (
        r * np.arange(n)[:, None] + np.arange(r + 1)[None, :] - 1
    ).astype(np.int64)
    dof_map[0, 0] = -1
    dof_map[-1, -1] = -1
    dof_map.setflags(write=False)
    return FESpace(
        partition=partition,
        degree=r,
        nodes_ref=gauss_lobatto_nodes(r + 1),
        dof_map=dof_map,
        dof_count=n * r - 1,
    )


@dataclass
class FEFunction:
    """Coefficient vector over the DOFs of an FESpace."""

    space: FESpace
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.ascontiguousarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.space.dof_count,):
            raise DimensionError(
                f"coefficient vector of length {coeffs.size} for a space "
                f"with {self.space.dof_count} DOFs"
            )
        self.coeffs = coeffs

    def copy(self) -> "FEFunction":
        return FEFunction(self.space, self.coeffs.copy())


def zero_function(space: FESpace) -> FEFunction:
    return FEFunction(space, np.zeros(space.dof_count))


def local_coefficients(f: FEFunction) -> np.ndarray:
    """Per-element local coefficients, boundary slots filled with zero.

    Shape (N, degree+1); row e lists the coefficients of element e at its
    Lobatto nodes.
    """
    padded = np.append(f.coeffs, 0.0)
    return padded[f.space.dof_map]


def eval_on_elements(f: FEFunction, ref_pts) -> tuple[np.ndarray, np.ndarray]:
    """Values and x-derivatives at the same reference points of every element.

    Returns (values, derivs) of shape (N, len(ref_pts)).
    """
    values, derivs = lagrange_basis(f.space.nodes_ref, ref_pts)
    loc = local_coefficients(f)
    jac = 0.5 * f.space.partition.element_lengths
    return loc @ values, (loc @ derivs) / jac[:, None]


def _locate_elements(partition: Partition, x: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(partition.knots, x, side="right") - 1
    return np.clip(idx, 0, partition.element_count - 1)


def eval_function_many(f: FEFunction, x) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (values, x-derivatives) of f at global positions x in [0, 1]."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < -_DOMAIN_SLACK) or np.any(x > 1.0 + _DOMAIN_SLACK):
        raise DomainError("evaluation point outside [0, 1]")
    x = np.clip(x, 0.0, 1.0)
    part = f.space.partition
    idx = _locate_elements(part, x)
    left = part.knots[idx]
    h = part.element_lengths[idx]
    ref = 2.0 * (x - left) / h - 1.0
    values, derivs = lagrange_basis(f.space.nodes_ref, ref)
    loc = local_coefficients(f)[idx]  # (npts, r+1)
    vals = np.einsum("pa,ap->p", loc, values)
    ders = np.einsum("pa,ap->p", loc, derivs) / (0.5 * h)
    return vals, ders


def eval_function(f: FEFunction, x: float) -> tuple[float, float]:
    """Value and x-derivative of f at a single position x in [0, 1]."""
    vals, ders = eval_function_many(f, [x])
    return float(vals[0]), float(ders[0])


def interpolate(space: FESpace, g) -> FEFunction:
    """Nodal interpolant of g at the Lobatto points of every element.

    g must be callable on numpy arrays and vanish at both endpoints
    (within 1e-12).
    """
    bnd = np.abs(np.asarray(g(np.array([0.0, 1.0])), dtype=float))
    if bnd.max() > _BOUNDARY_TOL:
        raise BoundaryMismatchError(
            f"interpolant requires g(0) = g(1) = 0, got |g| up to {bnd.max():.3g}"
        )
    part = space.partition
    mids = 0.5 * (part.knots[:-1] + part.knots[1:])
    jac = 0.5 * part.element_lengths
    xnodes = mids[:, None] + jac[:, None] * space.nodes_ref[None, :]
    gvals = np.asarray(g(xnodes), dtype=float)
    coeffs = np.zeros(space.dof_count + 1)
    coeffs[space.dof_map] = gvals
    return FEFunction(space, coeffs[:-1])


def axpy(alpha: float, f: FEFunction, g: FEFunction) -> FEFunction:
    """alpha * f + g as a new function on the shared space."""
    if f.space is not g.space and not f.space.compatible_with(g.space):
        raise IncompatibleSpacesError("operands live on different spaces")
    return FEFunction(g.space, alpha * f.coeffs + g.coeffs)
