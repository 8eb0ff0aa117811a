"""Error functionals: L2/H1/Linf norms, a sine-spectral negative-norm
surrogate, knot values, projection-gap diagnostics and EOC computation.

The negative norm of index s is computed in the surrogate

    ||e||_{-s}^2 = sum_{k=1}^{K} (k pi)^{-2s} e_k^2,
    e_k = sqrt(2) * int_0^1 e(x) sin(k pi x) dx,

which is equivalent to the dual norm on (0,1) with zero boundary data up
to s-dependent constants; convergence rates are invariant under the
equivalence.  With the orthonormal scaling above, ||e||_{-1} <= ||e|| / pi
holds exactly for any error resolved by the retained modes.
"""
from __future__ import annotations

import math

import numpy as np

from .fespace import FEFunction, axpy, eval_function_many, eval_on_elements
from .projection import ProjectionEngine
from .quadrature import MAX_POINTS, gauss_legendre


def _error_rule_points(degree: int) -> int:
    return min(2 * degree + 2, MAX_POINTS)


def _element_quad(space, n_points):
    rule = gauss_legendre(n_points)
    part = space.partition
    jac = 0.5 * part.element_lengths
    mids = 0.5 * (part.knots[:-1] + part.knots[1:])
    x = mids[:, None] + jac[:, None] * rule.nodes[None, :]
    return rule, x, jac


def l2_error(fh: FEFunction, u, t: float) -> float:
    """||fh - u(., t)||_{L2} by per-element Gauss quadrature."""
    rule, x, jac = _element_quad(fh.space, _error_rule_points(fh.space.degree))
    vals, _ = eval_on_elements(fh, rule.nodes)
    err = vals - u(x, t)
    return math.sqrt(float(np.einsum("eq,q,e->", err * err, rule.weights, jac)))


def h1_error(fh: FEFunction, u, u_x, t: float) -> float:
    """Full H1 norm sqrt(L2^2 + |.|_1^2) of fh - u(., t)."""
    rule, x, jac = _element_quad(fh.space, _error_rule_points(fh.space.degree))
    vals, ders = eval_on_elements(fh, rule.nodes)
    err = vals - u(x, t)
    derr = ders - u_x(x, t)
    sq = np.einsum("eq,q,e->", err * err, rule.weights, jac)
    sq += np.einsum("eq,q,e->", derr * derr, rule.weights, jac)
    return math.sqrt(float(sq))


def linf_error(fh: FEFunction, u, t: float, oversample: int = 1) -> float:
    """Max of |fh - u| over per-element Chebyshev samples plus the knots."""
    r = fh.space.degree
    m = oversample * (4 * r + 5)
    cheb = np.cos(np.pi * (2 * np.arange(m) + 1) / (2 * m))
    ref = np.concatenate(([-1.0], np.sort(cheb), [1.0]))
    part = fh.space.partition
    jac = 0.5 * part.element_lengths
    mids = 0.5 * (part.knots[:-1] + part.knots[1:])
    x = mids[:, None] + jac[:, None] * ref[None, :]
    vals, _ = eval_on_elements(fh, ref)
    return float(np.abs(vals - u(x, t)).max())


def negative_norm_error(fh: FEFunction, u, t: float, s: int, modes: int = 512) -> float:
    """Sine-spectral surrogate of ||fh - u||_{H^{-s}} with `modes` retained modes.

    Per-element quadrature is composite Gauss sized for the highest mode:
    at least degree + 4 + ceil(2 * modes * h_e) points per element.
    """
    if modes < 1:
        raise ValueError(f"mode count must be >= 1, got {modes}")
    if not 1 <= s <= 3:
        raise ValueError(f"negative-norm index must be in [1, 3], got {s}")
    part = fh.space.partition
    r = fh.space.degree
    xs = []
    ws = []
    for e in range(part.element_count):
        a = part.knots[e]
        h = part.element_lengths[e]
        needed = r + 4 + math.ceil(2.0 * modes * h)
        panels = max(1, math.ceil(needed / MAX_POINTS))
        pts = min(MAX_POINTS, math.ceil(needed / panels))
        rule = gauss_legendre(pts)
        width = h / panels
        for q in range(panels):
            mid = a + (q + 0.5) * width
            xs.append(mid + 0.5 * width * rule.nodes)
            ws.append(0.5 * width * rule.weights)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    vals, _ = eval_function_many(fh, x)
    werr = w * (vals - u(x, t))

    k = np.arange(1, modes + 1)
    coeff = np.empty(modes)
    chunk = 64
    for start in range(0, modes, chunk):
        kk = k[start : start + chunk]
        coeff[start : start + chunk] = np.sin(np.outer(kk * np.pi, x)) @ werr
    ek = math.sqrt(2.0) * coeff
    return math.sqrt(float(np.sum((k * np.pi) ** (-2.0 * s) * ek * ek)))


def knot_errors(fh: FEFunction, u, t: float) -> dict[float, float]:
    """Pointwise |fh - u| at every interior knot, keyed by knot position."""
    knots = fh.space.partition.interior_knots
    vals, _ = eval_function_many(fh, knots)
    errs = np.abs(vals - u(knots, t))
    return {float(x): float(e) for x, e in zip(knots, errs)}


def knot_error_summary(fh: FEFunction, u, t: float) -> tuple[float, float]:
    """(max over interior knots, value at the knot nearest x = 1/2)."""
    table = knot_errors(fh, u, t)
    positions = np.array(list(table))
    values = np.array(list(table.values()))
    mid = values[int(np.argmin(np.abs(positions - 0.5)))]
    return float(values.max()), float(mid)


def fe_l2_norm(f: FEFunction) -> float:
    """L2 norm of a discrete function (exact-degree quadrature)."""
    rule, _, jac = _element_quad(f.space, f.space.degree + 2)
    vals, _ = eval_on_elements(f, rule.nodes)
    return math.sqrt(float(np.einsum("eq,q,e->", vals * vals, rule.weights, jac)))


def fe_h1_norm(f: FEFunction) -> float:
    rule, _, jac = _element_quad(f.space, f.space.degree + 2)
    vals, ders = eval_on_elements(f, rule.nodes)
    sq = np.einsum("eq,q,e->", vals * vals, rule.weights, jac)
    sq += np.einsum("eq,q,e->", ders * ders, rule.weights, jac)
    return math.sqrt(float(sq))


def zeta_theta_diagnostics(
    U: FEFunction, engine: ProjectionEngine, t: float, k: int = 0
) -> dict[str, float]:
    """Norms of the projection gap zeta = u_tilde - U and of the
    post-processed remainder theta_k = zeta + z_1 + ... + z_k."""
    zeta = axpy(-1.0, U, engine.elliptic_projection(t))
    theta = zeta
    for j in range(1, k + 1):
        theta = axpy(1.0, engine.quasi_projection_z(t, j), theta)
    return {
        "zeta_L2": fe_l2_norm(zeta),
        "zeta_H1": fe_h1_norm(zeta),
        "theta_L2": fe_l2_norm(theta),
    }


def eoc(errors, hs) -> list[float | None]:
    """Pairwise log-ratio convergence rates.

    A zero error (exact reproduction) yields None for the adjacent pairs,
    to be excluded from rate assertions.
    """
    errors = list(errors)
    hs = list(hs)
    if len(errors) != len(hs):
        raise ValueError("errors and mesh sizes must have equal length")
    if any(e < 0 for e in errors):
        raise ValueError("errors must be nonnegative")
    rates: list[float | None] = []
    for i in range(1, len(errors)):
        if errors[i - 1] <= 0.0 or errors[i] <= 0.0:
            rates.append(None)
        else:
            rates.append(
                math.log(errors[i - 1] / errors[i]) / math.log(hs[i - 1] / hs[i])
            )
    return rates
