"""Quadrature-driven assembly over the zero-trace Lagrange space.

All assemblers share one AssemblyContext holding the rule (degree+2 Gauss
points by default), precomputed basis tables and element geometry.  The
linearised stationary form

    B(w; phi, psi) = int (A_xi(w, w') phi' + A_u(w, w') phi) psi'
                   + (f_xi(w, w') phi' + f_u(w, w') phi) psi dx
                   + lambda (phi, psi)

is assembled with coefficients frozen at the exact manufactured solution,
never at the discrete state; the Newton Jacobian uses the same kernel
evaluated at the discrete state instead.
"""
from __future__ import annotations

import numpy as np

from .banded import BandedMatrix
from .exceptions import DimensionError
from .fespace import FESpace, lagrange_basis
from .problems import ManufacturedSolution, NonlinearProblem, source_term
from .quadrature import gauss_legendre


class AssemblyContext:
    """Precomputed basis values, geometry and scatter indices for one space."""

    def __init__(self, space: FESpace, n_quad: int | None = None):
        self.space = space
        r = space.degree
        self.rule = gauss_legendre(n_quad if n_quad is not None else r + 2)
        values, derivs = lagrange_basis(space.nodes_ref, self.rule.nodes)
        self.basis_values = values  # (r+1, nq)
        self.basis_derivs = derivs
        part = space.partition
        self.jac = 0.5 * part.element_lengths  # (N,)
        mids = 0.5 * (part.knots[:-1] + part.knots[1:])
        self.quad_x = mids[:, None] + self.jac[:, None] * self.rule.nodes[None, :]
        self.half_bandwidth = 2 * r

        n = part.element_count
        dm = space.dof_map
        rows = np.broadcast_to(dm[:, :, None], (n, r + 1, r + 1))
        cols = np.broadcast_to(dm[:, None, :], (n, r + 1, r + 1))
        self._pair_mask = (rows >= 0) & (cols >= 0)
        self._pair_rows = rows[self._pair_mask]
        self._pair_cols = cols[self._pair_mask]

    def new_matrix(self) -> BandedMatrix:
        return BandedMatrix(self.space.dof_count, self.half_bandwidth)

    def _scatter_matrix(self, local: np.ndarray) -> BandedMatrix:
        m = self.new_matrix()
        m.scatter_add(self._pair_rows, self._pair_cols, local[self._pair_mask])
        return m

    def _scatter_vector(self, local: np.ndarray) -> np.ndarray:
        out = np.zeros(self.space.dof_count + 1)
        np.add.at(out, self.space.dof_map.ravel(), local.ravel())
        return out[:-1]

    def _state_at_quad(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if coeffs.shape != (self.space.dof_count,):
            raise DimensionError(
                f"state of length {coeffs.shape} for {self.space.dof_count} DOFs"
            )
        padded = np.append(coeffs, 0.0)
        loc = padded[self.space.dof_map]
        u = loc @ self.basis_values
        ux = (loc @ self.basis_derivs) / self.jac[:, None]
        return u, ux


def mass_matrix(ctx: AssemblyContext) -> BandedMatrix:
    """M[i, j] = int phi_j phi_i dx."""
    v = ctx.basis_values
    w = ctx.rule.weights
    local_ref = np.einsum("aq,bq,q->ab", v, v, w)
    local = ctx.jac[:, None, None] * local_ref[None, :, :]
    return ctx._scatter_matrix(local)


def _coefficient_kernel(ctx, a_xi, a_u, f_xi, f_u) -> BandedMatrix:
    """Banded matrix of the linearised kernel for given coefficient samples."""
    v = ctx.basis_values
    d = ctx.basis_derivs
    w = ctx.rule.weights
    jac = ctx.jac[:, None]
    local = (
        np.einsum("eq,aq,bq->eab", a_xi * w / jac, d, d)
        + np.einsum("eq,aq,bq->eab", a_u * w, d, v)
        + np.einsum("eq,aq,bq->eab", f_xi * w, v, d)
        + np.einsum("eq,aq,bq->eab", f_u * w * jac, v, v)
    )
    return ctx._scatter_matrix(local)


def nonlinear_residual(
    ctx: AssemblyContext,
    p: NonlinearProblem,
    s: ManufacturedSolution,
    coeffs: np.ndarray,
    t: float,
) -> np.ndarray:
    """F(U)_i = (A(U, U'), phi_i') + (f(U, U'), phi_i) - (g(., t), phi_i)."""
    u, ux = ctx._state_at_quad(np.asarray(coeffs, dtype=float))
    w = ctx.rule.weights
    a_vals = p.A(u, ux)
    f_vals = p.f(u, ux) - source_term(p, s, ctx.quad_x, t)
    local = np.einsum("eq,aq->ea", a_vals * w, ctx.basis_derivs) + np.einsum(
        "eq,aq->ea", f_vals * w * ctx.jac[:, None], ctx.basis_values
    )
    return ctx._scatter_vector(local)


def jacobian(
    ctx: AssemblyContext, p: NonlinearProblem, coeffs: np.ndarray, t: float
) -> BandedMatrix:
    """Derivative of the nonlinear residual with respect to the state."""
    u, ux = ctx._state_at_quad(np.asarray(coeffs, dtype=float))
    return _coefficient_kernel(ctx, p.A_xi(u, ux), p.A_u(u, ux), p.f_xi(u, ux), p.f_u(u, ux))


def linearized_B_matrix(
    ctx: AssemblyContext,
    p: NonlinearProblem,
    s: ManufacturedSolution,
    t: float,
    lam: float,
) -> BandedMatrix:
    """Matrix of B with coefficients at the exact solution, plus lam * mass."""
    if lam < 0.0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    u = s.u(ctx.quad_x, t)
    ux = s.u_x(ctx.quad_x, t)
    m = _coefficient_kernel(ctx, p.A_xi(u, ux), p.A_u(u, ux), p.f_xi(u, ux), p.f_u(u, ux))
    if lam != 0.0:
        m.band += lam * mass_matrix(ctx).band
    return m


def linearized_B_rhs_exact(
    ctx: AssemblyContext,
    p: NonlinearProblem,
    s: ManufacturedSolution,
    t: float,
    lam: float,
) -> np.ndarray:
    """b_i = B(u; u, phi_i) with the analytic u, u_x inserted."""
    u = s.u(ctx.quad_x, t)
    ux = s.u_x(ctx.quad_x, t)
    w = ctx.rule.weights
    grad_part = p.A_xi(u, ux) * ux + p.A_u(u, ux) * u
    val_part = p.f_xi(u, ux) * ux + p.f_u(u, ux) * u + lam * u
    local = np.einsum("eq,aq->ea", grad_part * w, ctx.basis_derivs) + np.einsum(
        "eq,aq->ea", val_part * w * ctx.jac[:, None], ctx.basis_values
    )
    return ctx._scatter_vector(local)


def load_vector(ctx: AssemblyContext, w_field, t: float) -> np.ndarray:
    """l_i = int w(x, t) phi_i dx for a space-time callable w."""
    vals = w_field(ctx.quad_x, t) * np.ones_like(ctx.quad_x)
    local = np.einsum(
        "eq,aq->ea", vals * ctx.rule.weights * ctx.jac[:, None], ctx.basis_values
    )
    return ctx._scatter_vector(local)


def coercivity_probe(
    ctx: AssemblyContext,
    p: NonlinearProblem,
    s: ManufacturedSolution,
    t: float,
    lam: float,
) -> float:
    """Smallest eigenvalue of the symmetric part of the assembled B matrix."""
    dense = linearized_B_matrix(ctx, p, s, t, lam).to_dense()
    sym = 0.5 * (dense + dense.T)
    return float(np.linalg.eigvalsh(sym).min())
