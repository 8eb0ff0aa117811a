"""Refinement studies: per-mesh error records, EOC tables and CSV output.

An evolution study builds the space on each mesh of the sequence, forms
the initial value, integrates to T and reports the maximum over the
checkpoint times T/4, T/2, 3T/4, T of every requested error functional.
A projection study skips time integration and measures the elliptic
projection error (and optionally the first corrector) at the same
checkpoint times.  Mesh levels are independent; `jobs > 1` runs them in
separate processes with a deterministic, level-ordered result.
"""
from __future__ import annotations

import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import AssemblyContext
from .exceptions import ConfigError, FemLabError
from .fespace import build_space, interpolate
from .mesh import build_perturbed_partition, build_uniform_partition
from .norms import (
    eoc,
    fe_l2_norm,
    h1_error,
    knot_error_summary,
    l2_error,
    linf_error,
    negative_norm_error,
    zeta_theta_diagnostics,
)
from .problems import auto_lambda, lookup_problem, lookup_solution, verify_ellipticity
from .projection import ProjectionEngine
from .timestepping import SCHEMES, NewtonSettings, TimeGrid, integrate

EVOLUTION_NORMS = ("L2", "H1", "Linf", "Hneg1", "Hneg2", "knot", "zeta", "theta")
PROJECTION_NORMS = ("eta_L2", "eta_H1", "eta_Hneg1", "z1_L2")
INITIAL_CONDITIONS = ("interpolant", "elliptic_projection", "superconvergent")

EVOLUTION_COLUMNS = (
    "n", "h", "r", "scheme", "dt",
    "L2", "H1", "Linf", "Hneg1", "Hneg2",
    "knot_max", "knot_mid", "zeta_H1", "theta_L2", "wall_ms",
)
PROJECTION_COLUMNS = ("n", "h", "r", "eta_L2", "eta_H1", "eta_Hneg1", "z1_L2", "wall_ms")


@dataclass
class StudyConfig:
    problem: str
    solution: str
    degree: int
    mesh_sequence: tuple[int, ...]
    kind: str = "evolution"
    scheme: str = "gauss2"
    dt_rule: str = "h"
    T: float = 1.0
    lam: float | str = "auto"
    initial_condition: str = "interpolant"
    superconv_k: int = 0
    norms: tuple[str, ...] = ()
    neg_norm_modes: int = 512
    perturb_amplitude: float = 0.0
    seed: int = 0
    fd_step: float = 5e-4
    newton: NewtonSettings = field(default_factory=NewtonSettings)
    output: str | None = None
    label: str = ""

    def resolved_norms(self) -> tuple[str, ...]:
        if self.norms:
            return tuple(self.norms)
        return EVOLUTION_NORMS if self.kind == "evolution" else PROJECTION_NORMS

    def validate(self) -> None:
        lookup_problem(self.problem)
        lookup_solution(self.solution)
        if self.degree < 1:
            raise ConfigError(f"degree must be >= 1, got {self.degree}")
        meshes = tuple(self.mesh_sequence)
        if len(meshes) < 1 or any(n < 2 for n in meshes):
            raise ConfigError(f"mesh sequence needs entries >= 2, got {meshes}")
        if any(b <= a for a, b in zip(meshes, meshes[1:])):
            raise ConfigError(f"mesh sequence must be strictly increasing: {meshes}")
        if self.kind not in ("evolution", "projection"):
            raise ConfigError(f"unknown study kind {self.kind!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not (self.dt_rule in ("h", "h32") or self.dt_rule.startswith("fixed:")):
            raise ConfigError(f"dt_rule must be h, h32 or fixed:<value>, got {self.dt_rule!r}")
        if self.dt_rule.startswith("fixed:"):
            try:
                v = float(self.dt_rule.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"bad fixed dt in {self.dt_rule!r}") from None
            if v <= 0:
                raise ConfigError("fixed dt must be positive")
        if self.T <= 0:
            raise ConfigError(f"horizon T must be positive, got {self.T}")
        if self.lam != "auto":
            try:
                lam = float(self.lam)
            except (TypeError, ValueError):
                raise ConfigError(f"lambda must be 'auto' or a number, got {self.lam!r}") from None
            if lam < 0:
                raise ConfigError("lambda must be >= 0")
        if self.initial_condition not in INITIAL_CONDITIONS:
            raise ConfigError(f"unknown initial condition {self.initial_condition!r}")
        if self.initial_condition == "superconvergent":
            if self.superconv_k < 0 or 2 * self.superconv_k > self.degree - 1:
                raise ConfigError(
                    f"superconvergent k={self.superconv_k} violates 2k <= r-1 "
                    f"for degree r={self.degree}"
                )
        allowed = EVOLUTION_NORMS if self.kind == "evolution" else PROJECTION_NORMS
        unknown = set(self.resolved_norms()) - set(allowed)
        if unknown:
            raise ConfigError(f"norms {sorted(unknown)} not available for kind {self.kind!r}")
        if self.neg_norm_modes < 1:
            raise ConfigError("neg_norm_modes must be >= 1")
        if not 0.0 <= self.perturb_amplitude < 0.5:
            raise ConfigError("perturb_amplitude must be in [0, 0.5)")
        if not 0.0 < self.fd_step <= 1e-3:
            raise ConfigError("fd_step must be in (0, 1e-3]")


@dataclass
class ErrorRecord:
    n: int
    h: float
    r: int
    scheme: str
    dt: float
    errors: dict[str, float]
    checkpoint_times: tuple[float, ...]
    wall_ms: float
    max_newton_iterations: int = 0
    failure: str | None = None


@dataclass
class StudyResult:
    config: StudyConfig
    records: list[ErrorRecord]
    rates: dict[str, list[float | None]]

    def successful(self) -> list[ErrorRecord]:
        return [rec for rec in self.records if rec.failure is None]


def _dt_target(cfg: StudyConfig, h: float) -> float:
    if cfg.dt_rule == "h":
        return h
    if cfg.dt_rule == "h32":
        return h**1.5
    return float(cfg.dt_rule.split(":", 1)[1])


def _checkpoint_plan(cfg: StudyConfig, h: float) -> tuple[float, tuple[float, ...], int]:
    """Step size, checkpoint times and step count with T/4 multiples on-grid."""
    target = _dt_target(cfg, h)
    nsteps = 4 * max(1, math.ceil(cfg.T / (4.0 * target) - 1e-12))
    dt = cfg.T / nsteps
    times = tuple((nsteps * m // 4) * dt for m in (1, 2, 3, 4))
    return dt, times, nsteps


def _initial_value(cfg: StudyConfig, space, engine: ProjectionEngine, s):
    if cfg.initial_condition == "interpolant":
        return interpolate(space, lambda x: s.u(x, 0.0))
    if cfg.initial_condition == "elliptic_projection":
        return engine.elliptic_projection(0.0)
    return engine.superconvergent_iv(cfg.superconv_k)


def _run_level(args) -> ErrorRecord:
    cfg, n = args
    start = time.perf_counter()
    h = 1.0 / n
    try:
        record = _run_level_inner(cfg, n)
    except (FemLabError, ValueError) as exc:
        record = ErrorRecord(
            n=n, h=h, r=cfg.degree, scheme=cfg.scheme, dt=float("nan"),
            errors={}, checkpoint_times=(), wall_ms=0.0,
            failure=f"{type(exc).__name__}: {exc}",
        )
    record.wall_ms = 1000.0 * (time.perf_counter() - start)
    return record


def _run_level_inner(cfg: StudyConfig, n: int) -> ErrorRecord:
    if cfg.perturb_amplitude > 0.0:
        part = build_perturbed_partition(n, cfg.perturb_amplitude, cfg.seed)
    else:
        part = build_uniform_partition(n)
    space = build_space(part, cfg.degree)
    p = lookup_problem(cfg.problem)
    s = lookup_solution(cfg.solution)
    verify_ellipticity(p, s, cfg.T)
    lam = auto_lambda(p, s, cfg.T) if cfg.lam == "auto" else float(cfg.lam)
    ctx = AssemblyContext(space)
    engine = ProjectionEngine(ctx, p, s, lam, cfg.fd_step)
    norms = cfg.resolved_norms()

    if cfg.kind == "projection":
        times = tuple(cfg.T * m / 4.0 for m in (1, 2, 3, 4))
        worst: dict[str, float] = {}
        for t in times:
            proj = engine.elliptic_projection(t)
            vals = {}
            if "eta_L2" in norms:
                vals["eta_L2"] = l2_error(proj, s.u, t)
            if "eta_H1" in norms:
                vals["eta_H1"] = h1_error(proj, s.u, s.u_x, t)
            if "eta_Hneg1" in norms:
                vals["eta_Hneg1"] = negative_norm_error(proj, s.u, t, 1, cfg.neg_norm_modes)
            if "z1_L2" in norms:
                vals["z1_L2"] = fe_l2_norm(engine.quasi_projection_z(t, 1))
            for key, v in vals.items():
                worst[key] = max(worst.get(key, 0.0), v)
        return ErrorRecord(
            n=n, h=part.h_max, r=cfg.degree, scheme="projection", dt=0.0,
            errors=worst, checkpoint_times=times, wall_ms=0.0,
        )

    dt, times, _ = _checkpoint_plan(cfg, part.h_max)
    u0 = _initial_value(cfg, space, engine, s)
    grid = TimeGrid(0.0, cfg.T, dt, cfg.scheme)
    snapshots, stats = integrate(u0, grid, ctx, p, s, cfg.newton, checkpoints=times)

    k_theta = cfg.superconv_k if cfg.initial_condition == "superconvergent" else 0
    worst = {}
    for t in times:
        u_h = snapshots[t]
        vals = {}
        if "L2" in norms:
            vals["L2"] = l2_error(u_h, s.u, t)
        if "H1" in norms:
            vals["H1"] = h1_error(u_h, s.u, s.u_x, t)
        if "Linf" in norms:
            vals["Linf"] = linf_error(u_h, s.u, t)
        if "Hneg1" in norms:
            vals["Hneg1"] = negative_norm_error(u_h, s.u, t, 1, cfg.neg_norm_modes)
        if "Hneg2" in norms:
            vals["Hneg2"] = negative_norm_error(u_h, s.u, t, 2, cfg.neg_norm_modes)
        if "knot" in norms:
            vals["knot_max"], vals["knot_mid"] = knot_error_summary(u_h, s.u, t)
        if "zeta" in norms or "theta" in norms:
            diag = zeta_theta_diagnostics(u_h, engine, t, k_theta)
            if "zeta" in norms:
                vals["zeta_H1"] = diag["zeta_H1"]
            if "theta" in norms:
                vals["theta_L2"] = diag["theta_L2"]
        for key, v in vals.items():
            worst[key] = max(worst.get(key, 0.0), v)
    return ErrorRecord(
        n=n, h=part.h_max, r=cfg.degree, scheme=cfg.scheme, dt=dt,
        errors=worst, checkpoint_times=times, wall_ms=0.0,
        max_newton_iterations=stats.max_newton_iterations,
    )


def run_study(cfg: StudyConfig, jobs: int = 1) -> StudyResult:
    cfg.validate()
    tasks = [(cfg, n) for n in cfg.mesh_sequence]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_level, tasks))
    else:
        records = [_run_level(task) for task in tasks]
    good = [rec for rec in records if rec.failure is None]
    rates: dict[str, list[float | None]] = {}
    if len(good) >= 2:
        keys = set(good[0].errors)
        for rec in good[1:]:
            keys &= set(rec.errors)
        hs = [rec.h for rec in good]
        for key in sorted(keys):
            rates[key] = eoc([rec.errors[key] for rec in good], hs)
    return StudyResult(config=cfg, records=records, rates=rates)


def final_rate(result: StudyResult, norm: str, pairs: int = 2) -> float | None:
    """Mean of the last `pairs` pairwise rates (the asymptotic regime)."""
    rates = [r for r in result.rates.get(norm, []) if r is not None]
    if not rates:
        return None
    tail = rates[-pairs:]
    return float(sum(tail) / len(tail))


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float) and math.isnan(value):
        return ""
    return format(float(value), ".16g")


def write_csv(result: StudyResult, target) -> None:
    """CSV with the fixed column order; floats carry 16 significant digits."""
    columns = EVOLUTION_COLUMNS if result.config.kind == "evolution" else PROJECTION_COLUMNS
    own = isinstance(target, (str, bytes))
    handle = open(target, "w", encoding="utf-8") if own else target
    try:
        handle.write(",".join(columns) + "\n")
        for rec in result.records:
            row = []
            for col in columns:
                if col == "n":
                    row.append(_format_cell(rec.n))
                elif col == "h":
                    row.append(_format_cell(rec.h))
                elif col == "r":
                    row.append(_format_cell(rec.r))
                elif col == "scheme":
                    row.append(rec.scheme)
                elif col == "dt":
                    row.append(_format_cell(rec.dt))
                elif col == "wall_ms":
                    row.append(format(rec.wall_ms, ".3f"))
                else:
                    row.append(_format_cell(rec.errors.get(col)))
            handle.write(",".join(row) + "\n")
    finally:
        if own:
            handle.close()


def csv_text(result: StudyResult) -> str:
    buf = io.StringIO()
    write_csv(result, buf)
    return buf.getvalue()


def format_rate_table(result: StudyResult) -> str:
    """Human-readable error and EOC table."""
    cfg = result.config
    lines = [
        f"study {cfg.label or cfg.problem + '+' + cfg.solution} "
        f"(kind={cfg.kind}, r={cfg.degree}, scheme={cfg.scheme}, dt_rule={cfg.dt_rule}, "
        f"ic={cfg.initial_condition})"
    ]
    good = result.successful()
    for rec in result.records:
        if rec.failure is not None:
            lines.append(f"  n={rec.n}: FAILED {rec.failure}")
    if not good:
        return "\n".join(lines)
    header = f"  {'norm':<10}" + "".join(f"{'n=' + str(rec.n):>12}" for rec in good)
    header += f"{'EOC':>8}"
    lines.append(header)
    keys = sorted(set().union(*[set(rec.errors) for rec in good]))
    for key in keys:
        row = f"  {key:<10}"
        for rec in good:
            v = rec.errors.get(key)
            row += f"{v:>12.4e}" if v is not None else f"{'-':>12}"
        rate = final_rate(result, key)
        row += f"{rate:>8.2f}" if rate is not None else f"{'-':>8}"
        lines.append(row)
    return "\n".join(lines)


def with_overrides(cfg: StudyConfig, **kwargs) -> StudyConfig:
    return replace(cfg, **kwargs)
