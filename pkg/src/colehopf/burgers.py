"""Linearisable generalized Burgers equations.

The nonlinear equation

    psi_t - M(x) psi_xx = H(x) psi psi_x + V(x) psi + W(x) psi^2

is mapped onto ``phi_t = M(x) phi_xx`` by ``psi = P + Q phi_x / phi`` when

    Q = 2M/H,   P = 2M H'/H^2 - M'/H,
    W = H' - H M'/(2M),   V = -M H''/H,

and the pair ``(M, H)`` satisfies the compatibility condition evaluated by
:func:`compatibility_residual`.  The functions below build these
expressions and check the known solution families of that condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from ._sampling import SampledResidual, require_nonvanishing, sample, sample_points, term_residual
from .errors import DegenerateError, SolverError
from .expr import Const, Expr, ParamEnv, X, as_expr, cos, exp, substitute

TOL_SYM = 1e-9

M_ODE_NOTE = (
    "constant-convection (H = 1) compatibility check uses the first term "
    "(M')^3/(2M); the variant M'/(2M) is not reduced by M = w^2 to (w w'')' = 0"
)


@dataclass(frozen=True)
class TransformPair:
    """``psi = P + Q * phi'/phi``."""

    P: Expr
    Q: Expr


@dataclass
class BurgersProblem:
    M: Expr
    H: Expr
    V: Expr
    W: Expr
    env: dict
    domain: tuple[float, float] = (0.0, 1.0)

    @classmethod
    def from_coefficients(cls, M, H, env=None, domain=(0.0, 1.0)) -> BurgersProblem:
        """Build the problem whose V and W make ``(M, H)`` linearisable."""
        M, H = as_expr(M), as_expr(H)
        env = dict(env or {})
        W, V = derive_coefficients(M, H, env, sample_points(domain))
        return cls(M, H, V, W, env, domain)

    def check(self, n: int = 101) -> None:
        x = sample_points(self.domain, n)
        m = sample(self.M, x, self.env)
        if np.any(m <= 0):
            raise DegenerateError(f"M must be positive on the domain; M({x[m.argmin()]:.6g}) = {m.min():.6g}")
        require_nonvanishing(self.H, x, self.env, "H")

    def transform(self) -> TransformPair:
        return derive_transform(self.M, self.H, self.env)


def derive_transform(M, H, env: ParamEnv | None = None, x=None) -> TransformPair:
    """Transform pair for the coefficient pair ``(M, H)``.

    When ``x`` is given, ``H`` is also checked for zeros on those points.
    """
    M, H = as_expr(M), as_expr(H)
    require_nonvanishing(H, x, env, "H")
    Q = 2 * M / H
    P = 2 * M * H.diff() / H**2 - M.diff() / H
    return TransformPair(P=P, Q=Q)


def derive_coefficients(M, H, env: ParamEnv | None = None, x=None) -> tuple[Expr, Expr]:
    """Return ``(W, V)`` induced by ``(M, H)``."""
    M, H = as_expr(M), as_expr(H)
    require_nonvanishing(H, x, env, "H")
    require_nonvanishing(M, x, env, "M")
    W = -H * M.diff() / (2 * M) + H.diff()
    V = -M * H.diff(2) / H
    return W, V


def compatibility_terms(M, H) -> list[Expr]:
    M, H = as_expr(M), as_expr(H)
    P = derive_transform(M, H).P
    dM, dH, dP = M.diff(), H.diff(), P.diff()
    return [
        (H * dM / (2 * M) - dH) * P**2,
        M * H.diff(2) / H * P,
        -H * dP * P,
        -M * P.diff(2),
    ]


def compatibility_residual(M, H, x, env: ParamEnv | None = None) -> SampledResidual:
    """Left side of the ``(M, H)`` compatibility condition on ``x``.

    Zero (to rounding) exactly when ``psi = P + Q phi_x/phi`` carries
    solutions of the heat equation to solutions of the Burgers equation.
    """
    M, H = as_expr(M), as_expr(H)
    require_nonvanishing(H, x, env, "H")
    require_nonvanishing(M, x, env, "M")
    return term_residual(compatibility_terms(M, H), x, env)


def is_compatible(M, H, x, env=None, tol: float = TOL_SYM) -> bool:
    return compatibility_residual(M, H, x, env).passes(tol)


# ---------------------------------------------------------------------------
# constant diffusivity: families of H

H_FAMILIES = {
    "reciprocal-linear": ("a", "b"),
    "secant": ("B", "omega", "beta"),
    "exponential": ("C", "alpha"),
}


def h_family(kind: str, params: ParamEnv) -> Expr:
    """H compatible with any constant M.

    ``reciprocal-linear``: 1/(a x + b); ``secant``: B/cos(omega x + beta);
    ``exponential``: C exp(alpha x).
    """
    if kind not in H_FAMILIES:
        raise ValueError(f"unknown H family {kind!r}; choose from {', '.join(H_FAMILIES)}")
    missing = [k for k in H_FAMILIES[kind] if k not in params]
    if missing:
        raise DegenerateError(f"family {kind!r} needs parameters {', '.join(missing)}")
    p = {k: float(params[k]) for k in H_FAMILIES[kind]}
    if kind == "reciprocal-linear":
        if p["a"] == 0 and p["b"] == 0:
            raise DegenerateError("reciprocal-linear family needs (a, b) != (0, 0)")
        e = 1 / (Const(p["a"]) * X + p["b"])
    elif kind == "secant":
        if p["B"] == 0:
            raise DegenerateError("secant family needs B != 0")
        e = p["B"] / cos(Const(p["omega"]) * X + p["beta"])
    else:
        if p["C"] == 0:
            raise DegenerateError("exponential family needs C != 0")
        e = p["C"] * exp(Const(p["alpha"]) * X)
    return substitute(e, {})


def h_ode_terms(H) -> list[Expr]:
    H = as_expr(H)
    d1, d2, d3 = H.diff(), H.diff(2), H.diff(3)
    return [H**2 * d3, -5 * H * d1 * d2, 4 * d1**3]


def h_ode_residual(H, x, env: ParamEnv | None = None) -> SampledResidual:
    """``H^2 H''' - 5 H H' H'' + 4 H'^3``, the constant-M condition on H."""
    return term_residual(h_ode_terms(H), x, env)


# ---------------------------------------------------------------------------
# constant convection (H = 1): families of M


def m_family_linear_sq(a1: float, b1: float) -> Expr:
    if a1 == 0 and b1 == 0:
        raise DegenerateError("M = (a1 x + b1)^2 needs (a1, b1) != (0, 0)")
    return substitute((Const(a1) * X + b1) ** 2, {})


def m_ode_terms(M) -> list[Expr]:
    M = as_expr(M)
    d1, d2, d3 = M.diff(), M.diff(2), M.diff(3)
    return [d1**3 / (2 * M), -d1 * d2, M * d3]


def m_ode_residual(M, x, env: ParamEnv | None = None) -> SampledResidual:
    """``(M')^3/(2M) - M' M'' + M M'''``, the H = 1 condition on M."""
    M = as_expr(M)
    require_nonvanishing(M, x, env, "M")
    return term_residual(m_ode_terms(M), x, env)


def implicit_w(c: float, C1: float, C2: float, x, branch: int = 1) -> np.ndarray:
    """Solve ``w w'' = c`` through its first integral, sampled on ``x``.

    ``w`` is defined implicitly by ``x = C2 + branch * int_{s*}^{w} ds /
    sqrt(2c ln s - C1 c)`` where ``s* = exp(C1/2)`` is the zero of the
    radicand, so ``w(C2) = s*``.  Substituting ``s = s* exp(sign(c) v^2)``
    removes the square-root singularity at ``s*``; the remaining smooth
    integral is evaluated by adaptive quadrature and inverted for ``v`` by
    bracketing root finding.  ``branch=+1`` gives ``w`` increasing in ``x``.
    """
    if c == 0:
        raise DegenerateError("implicit M family needs c != 0 (use m_family_linear_sq for c = 0)")
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    sigma = 1.0 if c > 0 else -1.0
    s_star = math.exp(C1 / 2)
    scale = 2 * s_star / math.sqrt(2 * abs(c))

    def G(v):
        val, err = quad(lambda t: math.exp(sigma * t * t), 0.0, v, epsabs=1e-14, epsrel=1e-13, limit=200)
        if err > 1e-10 * max(1.0, abs(val)):
            raise SolverError(f"quadrature failed for v = {v} (error estimate {err:.3g})")
        return val

    limit = math.sqrt(math.pi) / 2 if sigma < 0 else math.inf
    xs = np.asarray(x, dtype=float)
    w = np.empty_like(xs)
    for i, xi in np.ndenumerate(xs):
        target = branch * sigma * (xi - C2) / scale
        if target < 0 or target >= limit:
            raise DegenerateError(f"x = {xi:.6g} is outside the range reachable on this branch")
        if target == 0:
            w[i] = s_star
            continue
        hi = max(target, 1e-3)
        while G(hi) < target:
            hi *= 2
            if hi > 64:
                raise SolverError(f"could not bracket the inverse at x = {xi:.6g}")
        v = brentq(lambda s: G(s) - target, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        w[i] = s_star * math.exp(sigma * v * v)
    return w


def m_family_implicit(c: float, C1: float, C2: float, x, branch: int = 1) -> np.ndarray:
    """Sampled ``M = w^2`` for the ``c != 0`` branch of ``w w'' = c``."""
    return implicit_w(c, C1, C2, x, branch) ** 2
