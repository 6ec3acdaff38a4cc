"""Independent residual checks.

Candidate fields are substituted back into the nonlinear equations with
explicit second-order centred differences, which share no code with the
solvers that produced them.  Roundtrips chain derivation, linear solve,
transform and residual into one verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_dilation

from ._sampling import SampledResidual, sample, term_residual
from .burgers import (
    M_ODE_NOTE,
    TOL_SYM,
    BurgersProblem,
    compatibility_terms,
    derive_coefficients,
    derive_transform,
    h_ode_residual,
    implicit_w,
    m_ode_residual,
)
from .errors import ColeHopfError, StageError
from .expr import Expr, ParamEnv, as_expr, parse
from .hopf import EPS_POLE, TransformedField, apply_transform
from .linsolve import Grid1D, solve_heat, solve_linear_ode2
from .ode import OdeProblem, constraint_terms, forward_derive, solve_u_ode

PDE_TOL = 1e-3
ODE_TOL = 1e-6

# equation tags
BURGERS = "burgers"
CONVECTIVE_ODE = "convective-ode"
BURGERS_COMPATIBILITY = "burgers-compatibility"
ODE_CONSTRAINT = "ode-constraint"
H_FAMILY = "h-family"
M_FAMILY = "m-family"

SPACE_TRIM = 2
TIME_TRIM = 1
MASK_DILATION = 3

DEFAULT_PROFILE_NOTE = (
    "initial profile 1 + 0.5*sin(pi*(x - x0)/(x1 - x0)) is an artifact choice: "
    "positive, and compatible with the held endpoint values"
)


@dataclass
class ResidualReport:
    """Residual norms of one equation over the points that were checked.

    ``verdict`` is ``"pass"`` iff ``linf <= tolerance``.  For identity
    checks (``relative=True``) the norms are divided by the largest single
    term of the identity over the samples.  ``residual`` holds the pointwise
    residual with NaN at excluded points; ``artifacts`` carries intermediate
    results of a roundtrip.  Neither is serialised by :meth:`to_dict`.
    """

    equation: str
    grid: dict
    linf: float
    l2: float
    masked_fraction: float
    tolerance: float
    stage: str = "residual"
    relative: bool = False
    degenerate: bool = False
    notes: list[str] = field(default_factory=list)
    related: list[ResidualReport] = field(default_factory=list)
    residual: np.ndarray | None = field(default=None, repr=False)
    times: np.ndarray | None = field(default=None, repr=False)
    artifacts: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.linf) and self.linf <= self.tolerance) and not self.degenerate

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        out = {
            "equation": self.equation,
            "stage": self.stage,
            "verdict": self.verdict,
            "linf": _json_float(self.linf),
            "l2": _json_float(self.l2),
            "relative": self.relative,
            "tolerance": self.tolerance,
            "masked_fraction": self.masked_fraction,
            "grid": self.grid,
            "notes": list(self.notes),
        }
        if self.degenerate:
            out["flags"] = ["degenerate field"]
        if self.related:
            out["related"] = [r.to_dict() for r in self.related]
        return out


def _json_float(v: float):
    return float(v) if np.isfinite(v) else None


def _grid_meta(grid: Grid1D, times=None) -> dict:
    meta = {"x0": grid.x0, "x1": grid.x1, "n": grid.n, "dx": grid.dx}
    if times is not None:
        meta.update(t0=float(times[0]), t1=float(times[-1]), nt=len(times) - 1)
    return meta


def _norms(r: np.ndarray, valid: np.ndarray) -> tuple[float, float]:
    vals = r[valid]
    if vals.size == 0:
        return float("nan"), float("nan")
    return float(np.max(np.abs(vals))), float(np.sqrt(np.mean(vals**2)))


def _excluded(mask: np.ndarray, trim_space: int, trim_time: int = 0) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        structure = np.ones(2 * MASK_DILATION + 1, dtype=bool)
    else:
        structure = np.ones((2 * TIME_TRIM + 1, 2 * MASK_DILATION + 1), dtype=bool)
    out = binary_dilation(mask, structure=structure) if mask.any() else mask.copy()
    out[..., :trim_space] = True
    out[..., -trim_space:] = True
    if trim_time:
        out[:trim_time] = True
        out[-trim_time:] = True
    return out


# ---------------------------------------------------------------------------
# residual oracles


def pde_residual(
    problem: BurgersProblem,
    psi: TransformedField,
    levels=None,
    tol: float = PDE_TOL,
) -> ResidualReport:
    """Residual of ``psi_t - M psi_xx - H psi psi_x - V psi - W psi^2``.

    Centred differences in time and space; two points at each spatial end,
    one level at each temporal end, and a neighbourhood of every masked
    point are excluded.  ``levels`` optionally restricts the norms to the
    given time-level indices.
    """
    if psi.times is None or psi.psi.ndim != 2:
        raise ValueError("pde_residual needs a time-dependent field")
    nlev, n = psi.psi.shape
    if nlev < 3 or n < 5:
        raise ValueError(f"need at least 3 time levels and 5 points, got {nlev} x {n}")
    times = np.asarray(psi.times, dtype=float)
    dts = np.diff(times)
    if not np.allclose(dts, dts[0], rtol=1e-9, atol=0):
        raise ValueError("time levels must be uniformly spaced")
    dt, dx = dts[0], psi.grid.dx
    x = psi.grid.x
    env = problem.env
    M, H, V, W = (sample(e, x, env) for e in (problem.M, problem.H, problem.V, problem.W))

    u = psi.psi
    r = np.full_like(u, np.nan)
    c = u[1:-1, 1:-1]
    u_t = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * dt)
    u_x = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * dx)
    u_xx = (u[1:-1, 2:] - 2 * c + u[1:-1, :-2]) / dx**2
    s = slice(1, -1)
    r[1:-1, 1:-1] = u_t - M[s] * u_xx - H[s] * c * u_x - V[s] * c - W[s] * c**2

    excluded = _excluded(psi.mask, SPACE_TRIM, TIME_TRIM)
    if levels is not None:
        chosen = np.zeros(nlev, dtype=bool)
        chosen[np.asarray(levels, dtype=int)] = True
        excluded |= ~chosen[:, None]
    valid = ~excluded & np.isfinite(r)
    linf, l2 = _norms(r, valid)
    notes = []
    if psi.degenerate:
        notes.append("degenerate field: every point is masked")
    return ResidualReport(
        BURGERS, _grid_meta(psi.grid, times), linf, l2, psi.masked_fraction, tol,
        degenerate=psi.degenerate or not valid.any(), notes=notes,
        residual=np.where(valid, r, np.nan), times=times,
    )


def ode_residual(
    problem: OdeProblem,
    psi,
    grid: Grid1D,
    mask=None,
    tol: float = ODE_TOL,
) -> ResidualReport:
    """Residual of ``psi'' - S - (V + F psi') psi - W psi^2`` (``- V1 psi'``
    when present) by centred differences; endpoints and a neighbourhood of
    masked points are excluded.  ``psi`` is an array on ``grid`` or a
    :class:`TransformedField`."""
    if isinstance(psi, TransformedField):
        mask = psi.mask if mask is None else mask
        psi = psi.psi
    u = np.asarray(psi, dtype=float)
    if u.shape != (grid.n,):
        raise ValueError(f"psi has shape {u.shape}, grid has {grid.n} points")
    if grid.n < 5:
        raise ValueError("ode_residual needs at least 5 points")
    mask = ~np.isfinite(u) if mask is None else np.asarray(mask, dtype=bool)
    dx, x = grid.dx, grid.x
    env = problem.env
    F, W, V, S = (sample(e, x, env) for e in (problem.F, problem.W, problem.V, problem.S))

    s = slice(1, -1)
    c = u[s]
    d1 = (u[2:] - u[:-2]) / (2 * dx)
    d2 = (u[2:] - 2 * c + u[:-2]) / dx**2
    r = np.full_like(u, np.nan)
    r[s] = d2 - S[s] - (V[s] + F[s] * d1) * c - W[s] * c**2
    if problem.V1 is not None:
        r[s] -= sample(problem.V1, x, env)[s] * d1

    valid = ~_excluded(mask, 1) & np.isfinite(r)
    linf, l2 = _norms(r, valid)
    degenerate = bool(mask.all()) or not valid.any()
    return ResidualReport(
        CONVECTIVE_ODE, _grid_meta(grid), linf, l2, float(mask.mean()), tol,
        degenerate=degenerate, notes=["degenerate field: every point is masked"] if mask.all() else [],
        residual=np.where(valid, r, np.nan),
    )


# ---------------------------------------------------------------------------
# identity checks


def _identity_report(equation: str, res: SampledResidual, tol: float, notes=()) -> ResidualReport:
    x = res.x
    grid = {"x0": float(x[0]), "x1": float(x[-1]), "n": int(x.size)}
    if res.scale:
        l2 = float(np.sqrt(np.mean(res.values**2))) / res.scale
    else:
        l2 = res.relative
    return ResidualReport(
        equation, grid, res.relative, l2, 0.0, tol,
        stage="constraint", relative=True, notes=list(notes), residual=res.values,
    )


def burgers_constraint_report(M, H, x, env: ParamEnv | None = None, tol: float = TOL_SYM) -> ResidualReport:
    M, H = as_expr(M), as_expr(H)
    res = term_residual(compatibility_terms(M, H), x, env)
    return _identity_report(BURGERS_COMPATIBILITY, res, tol)


def ode_constraint_report(problem: OdeProblem, x, tol: float = TOL_SYM) -> ResidualReport:
    res = term_residual(constraint_terms(problem.F, problem.W, problem.V), x, problem.env)
    return _identity_report(ODE_CONSTRAINT, res, tol)


def h_family_report(H, x, env: ParamEnv | None = None, tol: float = TOL_SYM) -> ResidualReport:
    return _identity_report(H_FAMILY, h_ode_residual(H, x, env), tol)


def m_family_report(M, x, env: ParamEnv | None = None, tol: float = TOL_SYM) -> ResidualReport:
    return _identity_report(M_FAMILY, m_ode_residual(M, x, env), tol, [M_ODE_NOTE])


def implicit_m_report(
    c: float, C1: float, C2: float, grid: Grid1D, branch: int = 1, tol: float = 1e-6
) -> ResidualReport:
    """Check ``w w'' = c`` for the implicitly defined ``w = sqrt(M)`` with a
    fourth-order five-point second difference on ``grid`` (ends excluded)."""
    w = implicit_w(c, C1, C2, grid.x, branch)
    h = grid.dx
    d2 = (-w[:-4] + 16 * w[1:-3] - 30 * w[2:-2] + 16 * w[3:-1] - w[4:]) / (12 * h**2)
    r = np.full_like(w, np.nan)
    r[2:-2] = w[2:-2] * d2 - c
    valid = np.isfinite(r)
    linf, l2 = _norms(r, valid)
    return ResidualReport(
        M_FAMILY, _grid_meta(grid), linf, l2, 0.0, tol,
        notes=[f"w w'' = c with c = {c!r}; M = w^2"], residual=r,
    )


# ---------------------------------------------------------------------------
# roundtrips


class _Stages:
    """Run pipeline steps, re-raising failures tagged with the stage name."""

    def __call__(self, stage: str, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except (ColeHopfError, ValueError, ArithmeticError, RuntimeError) as exc:
            raise StageError(stage, exc) from exc


def default_profile(grid: Grid1D) -> Expr:
    k = math.pi / (grid.x1 - grid.x0)
    return parse(f"1 + 0.5*sin({k!r}*(x - {grid.x0!r}))")


def roundtrip_burgers(
    M,
    H,
    phi0,
    grid: Grid1D,
    t_end: float,
    nt: int,
    env: ParamEnv | None = None,
    theta: float = 0.5,
    tol: float = PDE_TOL,
    bc=None,
    eps_pole: float = EPS_POLE,
) -> ResidualReport:
    """Compatibility check, derivation, heat solve, transform, residual.

    An incompatible ``(M, H)`` returns the failing constraint report with
    no solve attempted.  Any other failure raises :class:`StageError`.
    ``phi0=None`` selects the default positive profile.
    """
    run = _Stages()
    env = dict(env or {})
    M, H = run("parse", as_expr, M), run("parse", as_expr, H)
    notes = []
    if phi0 is None:
        phi0 = default_profile(grid)
        notes.append(DEFAULT_PROFILE_NOTE)
    phi0 = run("parse", as_expr, phi0)
    x = grid.x
    constraint = run("constraint", burgers_constraint_report, M, H, x, env)
    if not constraint.passed:
        return constraint
    pair = run("derive", derive_transform, M, H, env, x)
    W, V = run("derive", derive_coefficients, M, H, env, x)
    problem = BurgersProblem(M, H, V, W, env, (grid.x0, grid.x1))
    field_ = run("solve", solve_heat, M, phi0, grid, t_end, nt, theta, bc, env)
    psi = run("transform", apply_transform, pair, field_, env, eps_pole)
    report = run("residual", pde_residual, problem, psi, None, tol)
    report.notes = notes + field_.notes + report.notes
    report.related.append(constraint)
    report.artifacts.update(problem=problem, pair=pair, field=field_, psi=psi)
    return report


def roundtrip_ode(
    F,
    W,
    V,
    S,
    U0: float,
    phi0: float,
    dphi0: float,
    grid: Grid1D,
    env: ParamEnv | None = None,
    tol: float = ODE_TOL,
    eps_pole: float = EPS_POLE,
    rtol: float = 1e-12,
    atol: float = 1e-12,
) -> ResidualReport:
    """Constraint check, U-equation solve, linear solve, transform, residual.

    ``U0`` is the potential at the left end of the grid; ``phi0``/``dphi0``
    are the linear solution's data there.
    """
    run = _Stages()
    problem = run("parse", OdeProblem.from_text, F, W, V, S, env=env, domain=(grid.x0, grid.x1))
    x = grid.x
    derived = run("derive", forward_derive, problem, x)
    constraint = run("constraint", ode_constraint_report, problem, x)
    if not constraint.passed:
        return constraint
    U = run("solve", solve_u_ode, derived.u_ode, U0, grid.x0, grid, problem.env, rtol, atol)
    field_ = run("solve", solve_linear_ode2, U, grid.x0, phi0, dphi0, grid, None, rtol, atol)
    psi = run("transform", apply_transform, derived.pair, field_, problem.env, eps_pole)
    report = run("residual", ode_residual, problem, psi, grid, None, tol)
    report.notes = field_.notes + report.notes
    report.related.append(constraint)
    report.artifacts.update(problem=problem, derived=derived, potential=U, field=field_, psi=psi)
    return report


__all__ = [
    "ResidualReport",
    "burgers_constraint_report",
    "default_profile",
    "h_family_report",
    "implicit_m_report",
    "m_family_report",
    "ode_constraint_report",
    "ode_residual",
    "pde_residual",
    "roundtrip_burgers",
    "roundtrip_ode",
]
