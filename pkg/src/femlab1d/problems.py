"""Registry of nonlinearities and manufactured solutions.

A problem supplies the flux A(u, xi) and reaction f(u, xi) together with
their first partial derivatives, all as plain numpy-vectorised callables
of (value, gradient).  A manufactured solution supplies u and its
derivatives in closed form; the induced source makes it solve

    u_t - d/dx A(u, u_x) + f(u, u_x) = g            on (0, 1),

with zero boundary values.  Partial derivatives are hand-coded, so a
finite-difference consistency check guards against transcription errors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import EllipticityError, RegistryError

Coefficient = Callable[[np.ndarray, np.ndarray], np.ndarray]
SpaceTimeField = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class NonlinearProblem:
    name: str
    A: Coefficient
    A_u: Coefficient
    A_xi: Coefficient
    f: Coefficient
    f_u: Coefficient
    f_xi: Coefficient


@dataclass(frozen=True)
class ManufacturedSolution:
    name: str
    u: SpaceTimeField
    u_t: SpaceTimeField
    u_x: SpaceTimeField
    u_xx: SpaceTimeField


def _zero(u, xi):
    return np.zeros(np.broadcast(np.asarray(u), np.asarray(xi)).shape)


def _one(u, xi):
    return np.ones(np.broadcast(np.asarray(u), np.asarray(xi)).shape)


PROBLEMS = {
    "heat": NonlinearProblem(
        name="heat",
        A=lambda u, xi: 1.0 * xi,
        A_u=_zero,
        A_xi=_one,
        f=_zero,
        f_u=_zero,
        f_xi=_zero,
    ),
    "cubic_flux": NonlinearProblem(
        name="cubic_flux",
        A=lambda u, xi: xi + xi**3 / 3.0,
        A_u=_zero,
        A_xi=lambda u, xi: 1.0 + xi**2,
        f=_zero,
        f_u=_zero,
        f_xi=_zero,
    ),
    "burgers_react": NonlinearProblem(
        name="burgers_react",
        A=lambda u, xi: 1.0 * xi,
        A_u=_zero,
        A_xi=_one,
        f=lambda u, xi: u * xi,
        f_u=lambda u, xi: 1.0 * xi,
        f_xi=lambda u, xi: 1.0 * u,
    ),
    "full_quasilinear": NonlinearProblem(
        name="full_quasilinear",
        A=lambda u, xi: (1.0 + u**2) * xi,
        A_u=lambda u, xi: 2.0 * u * xi,
        A_xi=lambda u, xi: 1.0 + u**2,
        f=lambda u, xi: np.sin(u) + 0.1 * xi / (1.0 + xi**2),
        f_u=lambda u, xi: np.cos(u) + _zero(u, xi),
        f_xi=lambda u, xi: 0.1 * (1.0 - xi**2) / (1.0 + xi**2) ** 2,
    ),
}

SOLUTIONS = {
    "sine_decay": ManufacturedSolution(
        name="sine_decay",
        u=lambda x, t: np.exp(-t) * np.sin(np.pi * x),
        u_t=lambda x, t: -np.exp(-t) * np.sin(np.pi * x),
        u_x=lambda x, t: np.pi * np.exp(-t) * np.cos(np.pi * x),
        u_xx=lambda x, t: -np.pi**2 * np.exp(-t) * np.sin(np.pi * x),
    ),
    "sine_poly": ManufacturedSolution(
        name="sine_poly",
        u=lambda x, t: (1.0 + t**2) * np.exp(-t) * np.sin(2 * np.pi * x),
        u_t=lambda x, t: (2.0 * t - 1.0 - t**2) * np.exp(-t) * np.sin(2 * np.pi * x),
        u_x=lambda x, t: 2 * np.pi * (1.0 + t**2) * np.exp(-t) * np.cos(2 * np.pi * x),
        u_xx=lambda x, t: -4 * np.pi**2 * (1.0 + t**2) * np.exp(-t) * np.sin(2 * np.pi * x),
    ),
    "bump": ManufacturedSolution(
        name="bump",
        u=lambda x, t: 16.0 * t * np.exp(-t) * x**2 * (1.0 - x) ** 2,
        u_t=lambda x, t: 16.0 * (1.0 - t) * np.exp(-t) * x**2 * (1.0 - x) ** 2,
        u_x=lambda x, t: 16.0 * t * np.exp(-t) * 2.0 * x * (1.0 - x) * (1.0 - 2.0 * x),
        u_xx=lambda x, t: 16.0 * t * np.exp(-t) * 2.0 * (6.0 * x**2 - 6.0 * x + 1.0),
    ),
}


def lookup_problem(name: str) -> NonlinearProblem:
    try:
        return PROBLEMS[name]
    except KeyError:
        raise RegistryError(
            f"unknown problem {name!r}; registered: {sorted(PROBLEMS)}"
        ) from None


def lookup_solution(name: str) -> ManufacturedSolution:
    try:
        return SOLUTIONS[name]
    except KeyError:
        raise RegistryError(
            f"unknown solution {name!r}; registered: {sorted(SOLUTIONS)}"
        ) from None


def source_term(p: NonlinearProblem, s: ManufacturedSolution, x, t: float):
    """Source g making s.u solve u_t - (A(u, u_x))_x + f(u, u_x) = g.

    The flux divergence is expanded with the chain rule, so only first
    partials of A are needed:  (A)_x = A_u u_x + A_xi u_xx.
    """
    u = s.u(x, t)
    ux = s.u_x(x, t)
    return s.u_t(x, t) - (p.A_u(u, ux) * ux + p.A_xi(u, ux) * s.u_xx(x, t)) + p.f(u, ux)


@dataclass(frozen=True)
class EllipticityReport:
    min_a_xi: float
    u_range: tuple[float, float]
    xi_range: tuple[float, float]


def _solution_box(s: ManufacturedSolution, horizon: float, margin: float, nx=101, nt=41):
    """(u, xi) ranges covered by the solution path, inflated by `margin`."""
    x = np.linspace(0.0, 1.0, nx)
    ts = np.linspace(0.0, horizon, nt)
    uvals = np.concatenate([np.atleast_1d(s.u(x, t)) for t in ts])
    xivals = np.concatenate([np.atleast_1d(s.u_x(x, t)) for t in ts])

    def inflate(vals):
        lo, hi = float(vals.min()), float(vals.max())
        pad = margin * max(hi - lo, 1e-3)
        return lo - pad, hi + pad

    return inflate(uvals), inflate(xivals)


def verify_ellipticity(
    p: NonlinearProblem,
    s: ManufacturedSolution,
    horizon: float,
    margin: float = 0.25,
    nbox: int = 41,
) -> EllipticityReport:
    """Sample A_xi over the inflated solution range; fail unless it stays positive."""
    (ulo, uhi), (xlo, xhi) = _solution_box(s, horizon, margin)
    ug, xg = np.meshgrid(
        np.linspace(ulo, uhi, nbox), np.linspace(xlo, xhi, nbox), indexing="ij"
    )
    amin = float(np.min(p.A_xi(ug, xg)))
    report = EllipticityReport(amin, (ulo, uhi), (xlo, xhi))
    if amin <= 0.0:
        raise EllipticityError(
            f"A_xi attains {amin:.3g} <= 0 on the sampled range of "
            f"({p.name}, {s.name}); study must not run"
        )
    return report


def auto_lambda(
    p: NonlinearProblem,
    s: ManufacturedSolution,
    horizon: float,
    margin: float = 0.25,
    nbox: int = 41,
) -> float:
    """Zeroth-order shift making the linearised stationary form coercive.

    lambda = 1 + sup|f_u| + (sup|A_u| + sup|f_xi|)^2 / (2 rho_min) over the
    inflated solution range; the assembled-matrix coercivity probe validates
    the choice rather than trusting it.
    """
    report = verify_ellipticity(p, s, horizon, margin, nbox)
    (ulo, uhi), (xlo, xhi) = report.u_range, report.xi_range
    ug, xg = np.meshgrid(
        np.linspace(ulo, uhi, nbox), np.linspace(xlo, xhi, nbox), indexing="ij"
    )
    sup_fu = float(np.max(np.abs(p.f_u(ug, xg))))
    sup_cross = float(np.max(np.abs(p.A_u(ug, xg)))) + float(
        np.max(np.abs(p.f_xi(ug, xg)))
    )
    return 1.0 + sup_fu + sup_cross**2 / (2.0 * report.min_a_xi)


def check_partials(
    p: NonlinearProblem, u_samples, xi_samples, step: float = 1e-6
) -> float:
    """Max relative mismatch between hand-coded partials and central differences."""
    u = np.asarray(u_samples, dtype=float)
    xi = np.asarray(xi_samples, dtype=float)
    worst = 0.0
    for fn, dfn, wrt in (
        (p.A, p.A_u, "u"),
        (p.A, p.A_xi, "xi"),
        (p.f, p.f_u, "u"),
        (p.f, p.f_xi, "xi"),
    ):
        if wrt == "u":
            fd = (fn(u + step, xi) - fn(u - step, xi)) / (2 * step)
        else:
            fd = (fn(u, xi + step) - fn(u, xi - step)) / (2 * step)
        exact = dfn(u, xi)
        rel = np.abs(exact - fd) / np.maximum(1.0, np.abs(exact))
        worst = max(worst, float(rel.max()))
    return worst
