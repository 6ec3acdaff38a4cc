"""Grid sampling helpers shared by the derivation modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError
from .expr import Const, Expr, ParamEnv, compile_expr

DEFAULT_POINTS = 101
_TINY = np.finfo(float).tiny


@dataclass
class SampledResidual:
    """An identity evaluated term by term on sample points.

    ``scale`` is the largest absolute value of any individual term over the
    samples; relative checks compare ``max|values|`` against it.  Residuals
    in the subnormal range carry no relative precision and count as zero.
    """

    x: np.ndarray
    values: np.ndarray
    scale: float

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @property
    def relative(self) -> float:
        if self.max_abs < _TINY:
            return 0.0
        if self.scale == 0.0:
            return 0.0 if self.max_abs == 0.0 else float("inf")
        return self.max_abs / self.scale

    def passes(self, tol: float) -> bool:
        return self.max_abs < _TINY or self.max_abs <= tol * self.scale


def sample(e: Expr, x, env: ParamEnv | None = None) -> np.ndarray:
    return compile_expr(e, env)(np.asarray(x, dtype=float))


def sample_points(domain: tuple[float, float], n: int = DEFAULT_POINTS) -> np.ndarray:
    return np.linspace(domain[0], domain[1], n)


def require_nonvanishing(e: Expr, x, env: ParamEnv | None, what: str) -> None:
    if isinstance(e, Const) and e.value == 0.0:
        raise DegenerateError(f"{what} is identically zero")
    if x is None:
        return
    values = sample(e, x, env)
    bad = np.flatnonzero(values == 0.0)
    if bad.size:
        raise DegenerateError(f"{what} vanishes at x = {np.asarray(x)[bad[0]]:.6g}")


def term_residual(terms: list[Expr], x, env: ParamEnv | None) -> SampledResidual:
    x = np.asarray(x, dtype=float)
    values = np.array([sample(t, x, env) for t in terms])
    return SampledResidual(x, values.sum(axis=0), float(np.max(np.abs(values))) if values.size else 0.0)
