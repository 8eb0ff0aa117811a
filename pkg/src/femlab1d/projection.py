"""Elliptic projection of the exact solution and its quasi-projection ladder.

The projection u_tilde(t) in the discrete space is defined against the
linearised stationary form B frozen at the exact solution:

    B(u; u - u_tilde, v) = 0   for all v in the space.

On top of it sits the recursively defined corrector sequence

    z_0 = u_tilde - u,
    B(u; z_j, v) = -(d z_{j-1}/dt, v),    j = 1, 2, ...

each level two orders smaller than the previous one.  Time derivatives of
discrete coefficient paths are taken by 4th-order central differences
(five elliptic solves per evaluation) rather than by assembling the
differentiated system, which would need second partials of the
nonlinearities; the step is small enough that the O(delta^4) truncation
sits far below the spatial errors measured by the studies.  Manufactured
solutions are defined for all real t, so centred stencils at t = 0 are
legitimate.

Every factored B matrix and solved coefficient vector is cached on its
time key; an engine is meant to be confined to one worker.
"""
from __future__ import annotations

import numpy as np

from .assembly import (
    AssemblyContext,
    linearized_B_matrix,
    linearized_B_rhs_exact,
    load_vector,
    mass_matrix,
)
from .banded import lu_factor, solve
from .exceptions import (
    InvalidExpansionOrderError,
    ProjectionFailureError,
    SingularMatrixError,
)
from .fespace import FEFunction
from .problems import ManufacturedSolution, NonlinearProblem

_RESIDUAL_RTOL = 1e-11


class ProjectionEngine:
    def __init__(
        self,
        ctx: AssemblyContext,
        problem: NonlinearProblem,
        solution: ManufacturedSolution,
        lam: float,
        fd_step: float = 5e-4,
    ):
        if not 0.0 < fd_step <= 1e-3:
            raise ValueError(f"fd_step must be in (0, 1e-3], got {fd_step}")
        self.ctx = ctx
        self.problem = problem
        self.solution = solution
        self.lam = float(lam)
        self.fd_step = float(fd_step)
        self.mass = mass_matrix(ctx)
        self._factors: dict[float, object] = {}
        self._proj: dict[float, np.ndarray] = {}
        self._z: dict[tuple[int, float], np.ndarray] = {}

    @property
    def space(self):
        return self.ctx.space

    @staticmethod
    def _key(t: float) -> float:
        return float(round(float(t), 12))

    def _factor(self, t: float):
        key = self._key(t)
        if key not in self._factors:
            b_mat = linearized_B_matrix(self.ctx, self.problem, self.solution, t, self.lam)
            try:
                self._factors[key] = (lu_factor(b_mat), b_mat)
            except SingularMatrixError as exc:
                raise ProjectionFailureError(
                    f"stationary form singular at t={t:.6g}; lambda={self.lam:.6g} "
                    "too small (run the coercivity probe)"
                ) from exc
        return self._factors[key]

    def _projection_coeffs(self, t: float) -> np.ndarray:
        key = self._key(t)
        if key not in self._proj:
            lu, b_mat = self._factor(t)
            rhs = linearized_B_rhs_exact(self.ctx, self.problem, self.solution, t, self.lam)
            c = solve(lu, rhs)
            resid = np.abs(b_mat.matvec(c) - rhs).max()
            scale = max(np.abs(rhs).max(), 1e-300)
            if resid > _RESIDUAL_RTOL * scale:
                raise ProjectionFailureError(
                    f"projection solve residual {resid:.3g} exceeds "
                    f"{_RESIDUAL_RTOL:g} * {scale:.3g} at t={t:.6g}"
                )
            self._proj[key] = c
        return self._proj[key]

    def elliptic_projection(self, t: float) -> FEFunction:
        """The B-orthogonal image of the exact solution at time t."""
        return FEFunction(self.space, self._projection_coeffs(t).copy())

    def _path_derivative(self, path, t: float, order_m: int) -> np.ndarray:
        d = self.fd_step
        cm2 = path(t - 2 * d)
        cm1 = path(t - d)
        cp1 = path(t + d)
        cp2 = path(t + 2 * d)
        if order_m == 1:
            return (cm2 - 8.0 * cm1 + 8.0 * cp1 - cp2) / (12.0 * d)
        if order_m == 2:
            c0 = path(t)
            return (-cm2 + 16.0 * cm1 - 30.0 * c0 + 16.0 * cp1 - cp2) / (12.0 * d * d)
        raise ValueError(f"time-derivative order must be 1 or 2, got {order_m}")

    def projection_dt(self, t: float, order_m: int = 1) -> FEFunction:
        """order_m-th time derivative of the projection's coefficient path."""
        c = self._path_derivative(self._projection_coeffs, t, order_m)
        return FEFunction(self.space, c)

    def _z_coeffs(self, t: float, j: int) -> np.ndarray:
        key = (j, self._key(t))
        if key not in self._z:
            if j == 1:
                dproj = self._path_derivative(self._projection_coeffs, t, 1)
                rhs = load_vector(self.ctx, self.solution.u_t, t) - self.mass.matvec(dproj)
            else:
                dz = self._path_derivative(lambda tt: self._z_coeffs(tt, j - 1), t, 1)
                rhs = -self.mass.matvec(dz)
            lu, _ = self._factor(t)
            self._z[key] = solve(lu, rhs)
        return self._z[key]

    def quasi_projection_z(self, t: float, j: int) -> FEFunction:
        """The j-th corrector; j >= 1 (level 0 is the projection error itself)."""
        if j < 1:
            raise InvalidExpansionOrderError(f"corrector index must be >= 1, got {j}")
        return FEFunction(self.space, self._z_coeffs(t, j).copy())

    def superconvergent_iv(self, k: int) -> FEFunction:
        """Initial value u_tilde(0) + z_1(0) + ... + z_k(0); needs 2k <= r-1."""
        r = self.space.degree
        if k < 0 or 2 * k > r - 1:
            raise InvalidExpansionOrderError(
                f"expansion order k={k} violates 2k <= r-1 for degree r={r}"
            )
        c = self._projection_coeffs(0.0).copy()
        for j in range(1, k + 1):
            c += self._z_coeffs(0.0, j)
        return FEFunction(self.space, c)

    def fd_truncation_estimate(self, t: float) -> float:
        """Richardson-style bound on the first-derivative FD truncation error.

        Compares the stencil at fd_step with one at fd_step/2; the
        difference is (1 - 1/16) of the coarse-step truncation term.
        """
        coarse = self._path_derivative(self._projection_coeffs, t, 1)
        saved = self.fd_step
        try:
            self.fd_step = saved / 2.0
            fine = self._path_derivative(self._projection_coeffs, t, 1)
        finally:
            self.fd_step = saved
        return float(np.abs(coarse - fine).max() / (1.0 - 1.0 / 16.0))
