"""Implicit time integration of the semidiscrete system M dU/dt = -F(U, t).

Two A-stable schemes: the implicit midpoint rule (order 2) and the
two-stage Gauss-Legendre collocation method (order 4).  The Gauss stages
are solved as one coupled Newton problem whose block Jacobian interleaves
the two single-stage Jacobians, keeping the system banded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import AssemblyContext, jacobian, mass_matrix, nonlinear_residual
from .banded import BandedMatrix, lu_factor, solve
from .exceptions import NewtonDivergenceError, SingularMatrixError
from .fespace import FEFunction

_SQRT3 = math.sqrt(3.0)
GAUSS2_C = (0.5 - _SQRT3 / 6.0, 0.5 + _SQRT3 / 6.0)
GAUSS2_A = (
    (0.25, 0.25 - _SQRT3 / 6.0),
    (0.25 + _SQRT3 / 6.0, 0.25),
)
SCHEMES = ("implicit_midpoint", "gauss2")


@dataclass
class NewtonSettings:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_iter: int = 25

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    dt: float
    scheme: str = "gauss2"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        span = self.T - self.t0
        if span < 0:
            raise ValueError("T must be >= t0")
        steps = round(span / self.dt) if span > 0 else 0
        if abs(steps * self.dt - span) > 1e-12 * max(1.0, abs(self.T)):
            raise ValueError(f"(T - t0)/dt = {span / self.dt} is not an integer")

    @property
    def step_count(self) -> int:
        return round((self.T - self.t0) / self.dt)


@dataclass
class IntegrationStats:
    steps: int = 0
    max_newton_iterations: int = 0


def newton_solve(residual_fn, jacobian_fn, guess, settings: NewtonSettings | None = None):
    """Newton iteration on a vector residual with a banded Jacobian.

    Stops once the sup-norm residual falls below
    abs_tol + rel_tol * ||residual(guess)||.
    """
    settings = settings or NewtonSettings()
    x = np.array(guess, dtype=float)
    r = residual_fn(x)
    r0 = float(np.abs(r).max()) if r.size else 0.0
    target = settings.abs_tol + settings.rel_tol * r0
    if r0 <= target:
        return x, 0
    last = r0
    for it in range(1, settings.max_iter + 1):
        try:
            lu = lu_factor(jacobian_fn(x))
        except SingularMatrixError as exc:
            raise NewtonDivergenceError(
                f"singular Jacobian at iteration {it} (residual {last:.3g})",
                residual_norm=last,
            ) from exc
        x = x + solve(lu, -r)
        r = residual_fn(x)
        last = float(np.abs(r).max())
        if last <= target:
            return x, it
    raise NewtonDivergenceError(
        f"no convergence in {settings.max_iter} iterations "
        f"(last residual {last:.3g}, target {target:.3g})",
        residual_norm=last,
    )


def _interleave(v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    out = np.empty(v1.size + v2.size)
    out[0::2] = v1
    out[1::2] = v2
    return out


def _block_jacobian(mass: BandedMatrix, j1: BandedMatrix, j2: BandedMatrix, dt: float) -> BandedMatrix:
    """Interleaved 2x2 block matrix  delta_ij M + dt a_ij J_j."""
    hb = mass.half_bandwidth
    dim = mass.dim
    hb_blk = 2 * hb + 1
    block = BandedMatrix(2 * dim, hb_blk)
    stages = (j1.band, j2.band)
    for i in range(2):
        for j in range(2):
            src = dt * GAUSS2_A[i][j] * stages[j]
            if i == j:
                src = src + mass.band
            for d in range(-hb, hb + 1):
                j0 = max(0, -d)
                j1_ = dim - max(0, d)
                if j1_ <= j0:
                    continue
                offset = 2 * d + (i - j)
                block.band[hb_blk + offset, 2 * j0 + j : 2 * j1_ + j : 2] = src[
                    hb + d, j0:j1_
                ]
    return block


def step(
    state: np.ndarray,
    t: float,
    dt: float,
    scheme: str,
    ctx: AssemblyContext,
    p,
    s,
    settings: NewtonSettings | None = None,
    mass: BandedMatrix | None = None,
):
    """Advance one implicit step; returns (new_state, newton_iterations)."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    mass = mass if mass is not None else mass_matrix(ctx)
    u_old = np.asarray(state, dtype=float)

    try:
        if scheme == "implicit_midpoint":

            def residual(u_new):
                mid = 0.5 * (u_old + u_new)
                return mass.matvec(u_new - u_old) / dt + nonlinear_residual(
                    ctx, p, s, mid, t + 0.5 * dt
                )

            def jac(u_new):
                j_mid = jacobian(ctx, p, 0.5 * (u_old + u_new), t + 0.5 * dt)
                return BandedMatrix(
                    mass.dim, mass.half_bandwidth, mass.band / dt + 0.5 * j_mid.band
                )

            return newton_solve(residual, jac, u_old, settings)

        c1, c2 = GAUSS2_C
        (a11, a12), (a21, a22) = GAUSS2_A

        def residual(w):
            v1, v2 = w[0::2], w[1::2]
            f1 = nonlinear_residual(ctx, p, s, v1, t + c1 * dt)
            f2 = nonlinear_residual(ctx, p, s, v2, t + c2 * dt)
            r1 = mass.matvec(v1 - u_old) + dt * (a11 * f1 + a12 * f2)
            r2 = mass.matvec(v2 - u_old) + dt * (a21 * f1 + a22 * f2)
            return _interleave(r1, r2)

        def jac(w):
            v1, v2 = w[0::2], w[1::2]
            return _block_jacobian(
                mass,
                jacobian(ctx, p, v1, t + c1 * dt),
                jacobian(ctx, p, v2, t + c2 * dt),
                dt,
            )

        w_sol, iters = newton_solve(residual, jac, _interleave(u_old, u_old), settings)
        v1, v2 = w_sol[0::2], w_sol[1::2]
        # collocation update: b^T A^{-1} = (-sqrt(3), sqrt(3))
        return u_old + _SQRT3 * (v2 - v1), iters
    except NewtonDivergenceError as exc:
        raise NewtonDivergenceError(
            f"{scheme} step at t={t:.6g}, dt={dt:.3g}: {exc}",
            residual_norm=exc.residual_norm,
        ) from exc


def integrate(
    u0: FEFunction,
    grid: TimeGrid,
    ctx: AssemblyContext,
    p,
    s,
    settings: NewtonSettings | None = None,
    checkpoints=(),
):
    """March from t0 to T, snapshotting at the requested checkpoint times.

    Checkpoints must coincide with grid times.  Returns (snapshots, stats)
    where snapshots maps each requested time to an FEFunction.
    """
    nsteps = grid.step_count
    cp_index = {}
    for cp in checkpoints:
        k = round((cp - grid.t0) / grid.dt) if grid.dt > 0 else 0
        if not 0 <= k <= nsteps or abs(grid.t0 + k * grid.dt - cp) > 1e-9 * max(
            1.0, abs(grid.T)
        ):
            raise ValueError(f"checkpoint {cp} is not a grid time")
        cp_index.setdefault(k, []).append(cp)

    mass = mass_matrix(ctx)
    stats = IntegrationStats()
    snapshots: dict[float, FEFunction] = {}
    u = u0.coeffs.copy()
    if 0 in cp_index:
        for cp in cp_index[0]:
            snapshots[cp] = FEFunction(u0.space, u.copy())
    for k in range(1, nsteps + 1):
        t = grid.t0 + (k - 1) * grid.dt
        u, iters = step(u, t, grid.dt, grid.scheme, ctx, p, s, settings, mass)
        stats.steps += 1
        stats.max_newton_iterations = max(stats.max_newton_iterations, iters)
        if k in cp_index:
            for cp in cp_index[k]:
                snapshots[cp] = FEFunction(u0.space, u.copy())
    return snapshots, stats
