"""Solvers for the linear partner equations.

``solve_heat`` integrates ``phi_t = M(x) phi_xx`` with a theta-method in
time and second-order central differences in space; ``solve_linear_ode2``
integrates ``phi'' = U(x) phi`` with an adaptive embedded Runge-Kutta pair.
Both return a :class:`LinearField` holding ``phi`` and ``phi'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from . import _rk
from .errors import DegenerateError, SolverError
from .expr import Const, Expr, ParamEnv, compile_expr, free_params


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid of ``n`` points on ``[x0, x1]``."""

    x0: float
    x1: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"grid needs at least 3 points, got {self.n}")
        if not (np.isfinite(self.x0) and np.isfinite(self.x1)) or self.x1 <= self.x0:
            raise ValueError(f"grid interval must satisfy x0 < x1, got [{self.x0}, {self.x1}]")
        object.__setattr__(self, "n", int(self.n))

    @classmethod
    def parse(cls, text: str) -> Grid1D:
        """Parse ``"x0:x1:n"``."""
        try:
            a, b, n = text.split(":")
            return cls(float(a), float(b), int(n))
        except ValueError as exc:
            raise ValueError(f"bad grid spec {text!r}: expected x0:x1:n ({exc})") from None

    @classmethod
    def with_spacing(cls, x0: float, x1: float, dx: float) -> Grid1D:
        return cls(x0, x1, int(round((x1 - x0) / dx)) + 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x0, self.x1, self.n)

    @property
    def dx(self) -> float:
        return (self.x1 - self.x0) / (self.n - 1)

    def __str__(self):
        return f"{self.x0!r}:{self.x1!r}:{self.n}"


@dataclass
class LinearField:
    """Sampled solution of a linear equation.

    ``phi`` and ``dphi`` are 1-D (ODE case) or ``(len(times), n)`` arrays
    (PDE case).
    """

    grid: Grid1D
    phi: np.ndarray
    dphi: np.ndarray
    times: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        shape = (self.grid.n,) if self.times is None else (len(self.times), self.grid.n)
        if self.phi.shape != shape or self.dphi.shape != shape:
            raise ValueError(f"field shape {self.phi.shape}/{self.dphi.shape} != expected {shape}")
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.dphi))):
            raise SolverError("linear field contains non-finite values")

    def scaled(self, factor: float) -> LinearField:
        return LinearField(self.grid, self.phi * factor, self.dphi * factor, self.times, list(self.notes))


def fd_derivative(values: np.ndarray, dx: float) -> np.ndarray:
    """Fourth-order first derivative along the last axis.

    Central five-point stencil in the interior, one-sided/off-centred
    fourth-order stencils on the two outermost points at each end.
    """
    v = np.asarray(values, dtype=float)
    if v.shape[-1] < 5:
        raise ValueError("need at least 5 points for fourth-order differences")
    d = np.empty_like(v)
    d[..., 2:-2] = (v[..., :-4] - 8 * v[..., 1:-3] + 8 * v[..., 3:-1] - v[..., 4:]) / (12 * dx)
    s = v[..., :5]
    d[..., 0] = (-25 * s[..., 0] + 48 * s[..., 1] - 36 * s[..., 2] + 16 * s[..., 3] - 3 * s[..., 4]) / (12 * dx)
    d[..., 1] = (-3 * s[..., 0] - 10 * s[..., 1] + 18 * s[..., 2] - 6 * s[..., 3] + s[..., 4]) / (12 * dx)
    s = v[..., :-6:-1]  # last five, reversed
    d[..., -1] = -(-25 * s[..., 0] + 48 * s[..., 1] - 36 * s[..., 2] + 16 * s[..., 3] - 3 * s[..., 4]) / (12 * dx)
    d[..., -2] = -(-3 * s[..., 0] - 10 * s[..., 1] + 18 * s[..., 2] - 6 * s[..., 3] + s[..., 4]) / (12 * dx)
    return d


def _boundary_fn(e: Expr, x_b: float, env: ParamEnv) -> Callable[[float], float]:
    # boundary data may depend on time through the parameter "t"
    env = dict(env)
    if "t" not in free_params(e):
        value = compile_expr(e, env).scalar(x_b)
        return lambda t: value

    def g(t):
        env["t"] = t
        return compile_expr(e, env).scalar(x_b)

    return g


def solve_heat(
    M: Expr,
    phi0: Expr,
    grid: Grid1D,
    t_end: float,
    nt: int,
    theta: float = 0.5,
    bc: tuple[Expr, Expr] | None = None,
    env: ParamEnv | None = None,
) -> LinearField:
    """Solve ``phi_t = M(x) phi_xx`` on ``grid`` for ``0 <= t <= t_end``.

    ``bc`` gives Dirichlet data for the left and right ends as expressions
    that may use the parameter ``t``; by default the endpoint values of
    ``phi0`` are held fixed.  All ``nt + 1`` time levels are returned.
    """
    env = dict(env or {})
    if nt < 1 or not t_end > 0:
        raise ValueError("need nt >= 1 and t_end > 0")
    if not 0.5 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0.5, 1], got {theta}")
    if grid.n < 5:
        raise ValueError("heat solver needs at least 5 grid points")
    x, dx = grid.x, grid.dx
    m = compile_expr(M, env)(x)
    if np.any(m <= 0):
        raise DegenerateError(f"diffusivity must be positive; min M = {m.min():.6g} at x = {x[m.argmin()]:.6g}")
    phi = compile_expr(phi0, env)(x)
    notes = ["dphi from fourth-order finite differences of phi"]
    if bc is None:
        bc = (Const(phi[0]), Const(phi[-1]))
        notes.append("Dirichlet data: initial endpoint values held constant")
    left, right = _boundary_fn(bc[0], grid.x0, env), _boundary_fn(bc[1], grid.x1, env)

    dt = t_end / nt
    lam = m[1:-1] * dt / dx**2
    ab = np.zeros((3, grid.n - 2))
    ab[0, 1:] = -theta * lam[:-1]
    ab[1, :] = 1 + 2 * theta * lam
    ab[2, :-1] = -theta * lam[1:]
    # strictly diagonally dominant for M > 0
    assert np.all(ab[1] > np.abs(ab[0]) + np.abs(ab[2]) - 1e-15)

    times = np.linspace(0.0, t_end, nt + 1)
    levels = np.empty((nt + 1, grid.n))
    phi[0], phi[-1] = left(0.0), right(0.0)
    levels[0] = phi
    for k in range(nt):
        t_new = times[k + 1]
        lap = phi[2:] - 2 * phi[1:-1] + phi[:-2]
        rhs = phi[1:-1] + (1 - theta) * lam * lap
        gl, gr = left(t_new), right(t_new)
        rhs[0] += theta * lam[0] * gl
        rhs[-1] += theta * lam[-1] * gr
        new = np.empty_like(phi)
        new[0], new[-1] = gl, gr
        new[1:-1] = solve_banded((1, 1), ab, rhs, check_finite=False)
        phi = new
        levels[k + 1] = phi
    if not np.all(np.isfinite(levels)):
        raise SolverError("heat solve produced non-finite values")
    return LinearField(grid, levels, fd_derivative(levels, dx), times, notes)


def _as_function(U, env: ParamEnv | None) -> Callable[[float], float]:
    if isinstance(U, Expr):
        return compile_expr(U, env).scalar
    if callable(U):
        return U
    raise TypeError(f"potential must be an Expr or callable, got {type(U).__name__}")


def solve_linear_ode2(
    U,
    x0: float,
    phi0: float,
    dphi0: float,
    grid: Grid1D,
    env: ParamEnv | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-10,
) -> LinearField:
    """Solve ``phi'' = U(x) phi`` with ``phi(x0) = phi0``, ``phi'(x0) = dphi0``.

    ``U`` is an :class:`~colehopf.expr.Expr` or any callable of one float
    (e.g. a sampled potential).  ``x0`` may lie anywhere in the grid
    interval; the solution is carried to both sides.
    """
    u = _as_function(U, env)
    if not grid.x0 <= x0 <= grid.x1:
        raise ValueError(f"x0={x0} outside grid [{grid.x0}, {grid.x1}]")

    def rhs(x, y):
        ux = u(x)
        if not np.isfinite(ux):
            raise SolverError(f"non-finite potential at x={x}")
        return np.array([y[1], ux * y[0]])

    xs = grid.x
    phi = np.empty(grid.n)
    dphi = np.empty(grid.n)
    y0 = [phi0, dphi0]
    # a node within rounding distance of x0 is x0 itself
    snap = np.abs(xs - x0) <= 1e-12 * grid.dx
    ahead = (xs >= x0) | snap
    fwd = np.where(snap, x0, xs)[ahead]
    bwd = xs[~ahead][::-1]
    for part, idx in ((fwd, ahead), (bwd, ~ahead)):
        if part.size == 0:
            continue
        nodes = part if part[0] == x0 else np.concatenate(([x0], part))
        y, _ = _rk.integrate(rhs, nodes, y0, rtol=rtol, atol=atol)
        y = y[-part.size:]
        if part is bwd:
            y = y[::-1]
        phi[idx], dphi[idx] = y[:, 0], y[:, 1]
    return LinearField(grid, phi, dphi, notes=["dphi from the integrator state"])
