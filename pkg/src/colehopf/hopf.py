"""Apply ``psi = P + Q * phi'/phi`` to a sampled linear field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .burgers import TransformPair
from .expr import ParamEnv, compile_expr
from .linsolve import Grid1D, LinearField

EPS_POLE = 1e-8


@dataclass
class TransformedField:
    """``psi`` on the same samples as its source field.

    ``mask`` flags points where ``|phi| <= eps_pole * max|phi|`` (maximum
    taken per time level) and both neighbours of any sign change of ``phi``
    between adjacent points; ``psi`` is NaN there and finite elsewhere.
    """

    grid: Grid1D
    psi: np.ndarray
    mask: np.ndarray
    eps_pole: float
    times: np.ndarray | None = None

    @property
    def masked_fraction(self) -> float:
        return float(self.mask.mean())

    @property
    def degenerate(self) -> bool:
        """True when every point is masked."""
        return bool(self.mask.all())


def pole_mask(phi: np.ndarray, eps_pole: float = EPS_POLE) -> np.ndarray:
    scale = np.max(np.abs(phi), axis=-1, keepdims=True)
    mask = np.abs(phi) <= eps_pole * scale
    # a zero strictly between two samples is a pole of psi there
    crossing = phi[..., 1:] * phi[..., :-1] < 0
    mask[..., 1:] |= crossing
    mask[..., :-1] |= crossing
    return mask


def apply_transform(
    pair: TransformPair,
    field: LinearField,
    env: ParamEnv | None = None,
    eps_pole: float = EPS_POLE,
) -> TransformedField:
    x = field.grid.x
    P = compile_expr(pair.P, env)(x)
    Q = compile_expr(pair.Q, env)(x)
    mask = pole_mask(field.phi, eps_pole)
    safe = np.where(mask, 1.0, field.phi)
    psi = np.where(mask, np.nan, P + Q * field.dphi / safe)
    return TransformedField(field.grid, psi, mask, eps_pole, field.times)
