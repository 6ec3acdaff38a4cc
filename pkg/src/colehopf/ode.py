"""Linearisable second-order convective ODEs.

The nonlinear equation

    psi'' = S + (V + F psi') psi + W psi^2                       (+ V1 psi')

is related to ``phi'' = U phi`` by ``psi = P + Q phi'/phi``.  Given the
coefficients, ``Q = -2/F`` and ``P = -2W/F^2``; the potential ``U`` then
solves a first-order linear ODE and the coefficients must satisfy one
algebraic-differential constraint.  Conversely any ``(U, P, Q)`` with ``Q``
nonvanishing synthesises a linearisable equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import _rk
from ._sampling import SampledResidual, require_nonvanishing, sample, sample_points, term_residual
from .burgers import TOL_SYM, TransformPair
from .errors import DegenerateError, SolverError
from .expr import Antiderivative, Const, Expr, ParamEnv, as_expr, compile_expr, exp
from .linsolve import Grid1D


@dataclass
class OdeProblem:
    F: Expr
    W: Expr
    V: Expr
    S: Expr
    V1: Expr | None = None
    env: dict = field(default_factory=dict)
    domain: tuple[float, float] = (0.0, 1.0)

    @classmethod
    def from_text(cls, F, W, V, S, V1=None, env=None, domain=(0.0, 1.0)) -> OdeProblem:
        return cls(
            as_expr(F), as_expr(W), as_expr(V), as_expr(S),
            None if V1 is None else as_expr(V1), dict(env or {}), domain,
        )

    def check(self, n: int = 101) -> None:
        require_nonvanishing(self.F, sample_points(self.domain, n), self.env, "F")

    def coefficients(self) -> dict[str, Expr]:
        out = {"F": self.F, "W": self.W, "V": self.V, "S": self.S}
        if self.V1 is not None:
            out["V1"] = self.V1
        return out


class LinearPotential:
    """The potential ``U`` of ``phi'' = U phi``.

    Either closed form (an :class:`Expr`) or samples on a grid with cubic
    Hermite interpolation between them.  Both evaluate as ``U(x)``.
    """

    def __init__(self, x=None, values=None, derivatives=None, expr: Expr | None = None, env=None):
        self.expr = expr
        self.env = dict(env or {})
        if expr is not None:
            self._f = compile_expr(expr, self.env)
            self.x = None if x is None else np.asarray(x, dtype=float)
            self.values = None if self.x is None else self._f(self.x)
        else:
            self.x = np.asarray(x, dtype=float)
            self.values = np.asarray(values, dtype=float)
            if not np.all(np.isfinite(self.values)):
                raise SolverError("potential samples are not finite")
            self._f = CubicHermiteSpline(self.x, self.values, np.asarray(derivatives, dtype=float))
        self.U0 = None if self.values is None else float(self.values[0])

    @classmethod
    def from_expr(cls, U, env=None, x=None) -> LinearPotential:
        return cls(x=x, expr=as_expr(U), env=env)

    def __call__(self, x):
        if self.expr is not None:
            return self._f(x)
        v = self._f(x)
        return float(v) if np.ndim(x) == 0 else v


@dataclass(frozen=True)
class UOde:
    """``U' + g U = h``.

    ``h_terms`` optionally lists the additive pieces of ``h``; when given,
    residual checks measure cancellation against each piece rather than
    against their (possibly tiny) sum.
    """

    g: Expr
    h: Expr
    h_terms: tuple[Expr, ...] = ()

    def residual(self, U, x, env: ParamEnv | None = None) -> SampledResidual:
        U = as_expr(U)
        rhs = [-t for t in self.h_terms] if self.h_terms else [-self.h]
        return term_residual([U.diff(), self.g * U, *rhs], x, env)


@dataclass
class ForwardDerivation:
    pair: TransformPair
    u_ode: UOde
    constraint: SampledResidual

    def compatible(self, tol: float = TOL_SYM) -> bool:
        return self.constraint.passes(tol)


def constraint_terms(F, W, V) -> list[Expr]:
    F, W, V = as_expr(F), as_expr(W), as_expr(V)
    dF, dW = F.diff(), W.diff()
    return [
        V,
        F.diff(2) / F,
        -2 * dW / F,
        6 * W * dF / F**2,
        -2 * dF**2 / F**2,
        -4 * W**2 / F**2,
    ]


def u_ode_coefficients(F, W, V, S) -> UOde:
    F, W, V, S = (as_expr(e) for e in (F, W, V, S))
    dF, d2F, dW, d2W = F.diff(), F.diff(2), W.diff(), W.diff(2)
    g = (2 * W - 2 * dF) / F
    source = (
        F * S / 2
        + (d2W - V * W) / F
        + ((2 * W - 4 * dF) * dW - 2 * W * d2F) / F**2
        + 2 * W * (W**2 + 3 * dF**2 - 2 * W * dF) / F**3
    )
    pieces = (
        F * S / 2, d2W / F, -V * W / F,
        2 * W * dW / F**2, -4 * dF * dW / F**2, -2 * W * d2F / F**2,
        2 * W**3 / F**3, 6 * W * dF**2 / F**3, -4 * W**2 * dF / F**3,
    )
    return UOde(g=g, h=-source, h_terms=tuple(-t for t in pieces))


def forward_derive(problem: OdeProblem, x=None) -> ForwardDerivation:
    """Transform pair, U-equation and sampled constraint for ``problem``.

    A violated constraint is reported in the result, not raised.
    """
    if problem.V1 is not None:
        raise ValueError("problem has a psi' term; call reduce_v1 first")
    if x is None:
        x = sample_points(problem.domain)
    F, W = problem.F, problem.W
    require_nonvanishing(F, x, problem.env, "F")
    pair = TransformPair(P=-2 * W / F**2, Q=-2 / F)
    u_ode = u_ode_coefficients(F, W, problem.V, problem.S)
    constraint = term_residual(constraint_terms(F, W, problem.V), x, problem.env)
    return ForwardDerivation(pair, u_ode, constraint)


def solve_u_ode(
    u_ode: UOde,
    U0: float,
    x0: float,
    grid: Grid1D,
    env: ParamEnv | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-10,
) -> LinearPotential:
    """Integrate ``U' = h - g U`` from ``U(x0) = U0`` onto ``grid``.

    ``x0`` must be the left end of the grid.
    """
    if x0 != grid.x0:
        raise ValueError("U is integrated from the left end of the grid")
    g = compile_expr(u_ode.g, env).scalar
    h = compile_expr(u_ode.h, env).scalar

    def rhs(x, y):
        return np.array([h(x) - g(x) * y[0]])

    values, derivs = _rk.integrate(rhs, grid.x, [U0], rtol=rtol, atol=atol)
    return LinearPotential(grid.x, values[:, 0], derivs[:, 0])


def reverse_synthesize(U, P, Q, env: ParamEnv | None = None, domain=(0.0, 1.0), x=None) -> OdeProblem:
    """Coefficients of the convective ODE carried by ``psi = P + Q phi'/phi``
    from solutions of ``phi'' = U phi``."""
    U, P, Q = as_expr(U), as_expr(P), as_expr(Q)
    if x is None:
        x = sample_points(domain)
    require_nonvanishing(Q, x, env, "Q")
    dQ, d2Q = Q.diff(), Q.diff(2)
    F = -2 / Q
    W = -2 * P / Q**2
    V = (Q * d2Q + 4 * P**2 + 2 * (P * Q).diff()) / Q**2
    S = P.diff(2) + Q * U.diff() + 2 * (dQ + P) * U - P * d2Q / Q - 2 * P**2 * (dQ + P) / Q**2
    return OdeProblem(F, W, V, S, None, dict(env or {}), domain)


def reduce_v1(problem: OdeProblem, x0: float | None = None) -> tuple[Expr, OdeProblem]:
    """Remove the ``V1 psi'`` term by ``xi = p psi``.

    ``p = exp(-1/2 int_{x0}^x V1)`` (quadrature, normalised to ``p(x0) = 1``)
    so that ``V1 = -2 p'/p``.  Returns ``p`` and the problem satisfied by
    ``xi``.
    """
    V1 = problem.V1
    if V1 is None or (isinstance(V1, Const) and V1.value == 0.0):
        return Const(1.0), replace(problem, V1=None)
    if x0 is None:
        x0 = problem.domain[0]
    p = exp(-0.5 * Antiderivative(V1, float(x0)))
    p_vals = sample(p, sample_points(problem.domain), problem.env)
    if not np.all(p_vals > 0):
        raise DegenerateError("integrating factor is not positive on the domain")
    dp = p.diff()
    reduced = OdeProblem(
        F=problem.F / p,
        W=problem.W / p - problem.F * dp / p**2,
        V=problem.V + p.diff(2) / p,
        S=p * problem.S,
        V1=None,
        env=dict(problem.env),
        domain=problem.domain,
    )
    return p, reduced


__all__ = [
    "ForwardDerivation",
    "LinearPotential",
    "OdeProblem",
    "UOde",
    "constraint_terms",
    "forward_derive",
    "reduce_v1",
    "reverse_synthesize",
    "solve_u_ode",
    "u_ode_coefficients",
]
