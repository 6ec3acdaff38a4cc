"""Embedded Dormand-Prince 5(4) integrator with output on prescribed nodes.

Steps are adaptive but never cross an output node, so every returned value
is a step endpoint rather than an interpolant.  Finite differences taken
downstream of the solution therefore see only the (smooth) global error.
"""

import numpy as np

from .errors import SolverError

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


def _step(rhs, x, y, f0, h):
    k = np.empty((7, y.size))
    k[0] = f0
    for i in range(1, 7):
        yi = y + h * (np.asarray(_A[i]) @ k[:i])
        k[i] = rhs(x + _C[i] * h, yi)
    y_new = y + h * (_B[:6] @ k[:6])
    err = h * (_E @ k)
    # FSAL: last stage is the derivative at the new point
    return y_new, k[6], err


def integrate(rhs, nodes, y0, rtol=1e-10, atol=1e-10, max_steps=1_000_000):
    """Integrate ``y' = rhs(x, y)`` from ``nodes[0]`` through every node.

    ``nodes`` must be strictly monotone (either direction).  Returns the
    solution and its derivative at each node, shapes ``(len(nodes), dim)``.
    """
    nodes = np.asarray(nodes, dtype=float)
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    out = np.empty((nodes.size, y.size))
    dout = np.empty_like(out)
    x = nodes[0]
    f = np.asarray(rhs(x, y), dtype=float)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(y))):
        raise SolverError(f"non-finite initial state at x={x}")
    out[0], dout[0] = y, f
    if nodes.size == 1:
        return out, dout
    direction = np.sign(nodes[-1] - nodes[0])
    if np.any(np.diff(nodes) * direction <= 0):
        raise ValueError("output nodes must be strictly monotone")
    h = direction * min(abs(nodes[1] - nodes[0]), 0.01 * abs(nodes[-1] - nodes[0]) + 1e-300)
    steps = 0
    for j in range(1, nodes.size):
        target = nodes[j]
        while (target - x) * direction > 0:
            steps += 1
            if steps > max_steps:
                raise SolverError("maximum number of steps exceeded")
            remaining = target - x
            h_try = h
            last = abs(h) >= abs(remaining)
            if last:
                h = remaining
            if abs(h) <= 16 * np.finfo(float).eps * max(abs(x), 1.0):
                raise SolverError(f"step size underflow at x={x}")
            y_new, f_new, err = _step(rhs, x, y, f, h)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = np.sqrt(np.mean((err / scale) ** 2))
            if not np.isfinite(err_norm) or not np.all(np.isfinite(f_new)):
                h *= MIN_FACTOR
                continue
            if err_norm <= 1.0:
                x = target if last else x + h
                y, f = y_new, np.asarray(f_new)
                factor = MAX_FACTOR if err_norm == 0 else SAFETY * err_norm ** -0.2
                h_next = h * min(MAX_FACTOR, max(MIN_FACTOR, factor))
                if last:
                    # a step truncated to hit a node must not shrink the next one
                    h_next = direction * max(abs(h_next), abs(h_try))
                h = h_next
            else:
                h *= max(MIN_FACTOR, SAFETY * err_norm ** -0.2)
        out[j], dout[j] = y, f
    return out, dout
