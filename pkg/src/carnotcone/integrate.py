"""Batched adaptive Dormand-Prince 4(5) integration.

The verification ladders need thousands of short smooth flows; integrating
a batch of systems in lockstep with one shared adaptive step makes that
cheap.  The step-size controller uses the worst scaled error over the
batch, so every trajectory meets the requested tolerance.
"""

from __future__ import annotations

import numpy as np

from .errors import StepFailure

# Dormand-Prince tableau (RK45, the scipy RK45 pair)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_ERR = _B5 - _B4

_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_SAFETY = 0.9


def integrate(rhs, y0, t_end=1.0, rtol=1e-10, atol=1e-10, guard=None,
              max_steps=100000):
    """Integrate y' = rhs(y) from 0 to t_end for a batch of systems.

    rhs maps (B, D) -> (B, D) (autonomous).  y0 has shape (B, D) or (D,).
    guard, if given, is called with each accepted state and may raise to
    abort (used for chart-escape detection).  Returns the final state with
    the input's shape.
    """
    y = np.atleast_2d(np.asarray(y0, dtype=float)).copy()
    squeeze = np.ndim(y0) == 1
    t_end = float(t_end)
    if t_end == 0.0:
        return y[0] if squeeze else y
    direction = np.sign(t_end)
    t = 0.0

    f0 = rhs(y)
    scale = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2, axis=-1)).max()
    d1 = np.sqrt(np.mean((f0 / scale) ** 2, axis=-1)).max()
    h = 0.01 * abs(t_end)
    if d0 > 1e-5 and d1 > 1e-5:
        h = min(h, 0.01 * d0 / d1)
    h = max(h, 1e-6 * abs(t_end))
    h_min = 1e-14 * max(1.0, abs(t_end))

    k = np.empty((7,) + y.shape)
    for _ in range(max_steps):
        h = min(h, abs(t_end - t))
        hs = direction * h
        k[0] = f0
        for s in range(1, 7):
            ys = y + hs * np.einsum("s,s...->...", _A[s], k[:s])
            k[s] = rhs(ys)
        y_new = y + hs * np.einsum("s,s...->...", _B5, k)
        err_vec = hs * np.einsum("s,s...->...", _ERR, k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.sqrt(np.mean((err_vec / scale) ** 2, axis=-1)).max()

        if err <= 1.0:
            t += hs
            y = y_new
            f0 = k[6] if _C[6] == 1.0 else rhs(y)   # FSAL: stage 7 is at t+h
            if guard is not None:
                guard(y)
            if abs(t_end - t) <= 1e-15 * max(1.0, abs(t_end)):
                return y[0] if squeeze else y
            factor = _MAX_FACTOR if err == 0.0 else min(
                _MAX_FACTOR, _SAFETY * err ** -0.2)
        else:
            factor = max(_MIN_FACTOR, _SAFETY * err ** -0.2)
        h *= factor
        if h < h_min:
            raise StepFailure(
                f"step size underflow at t = {t:.6g} (h = {h:.3e}); "
                "the vector field is too stiff or singular here")
    raise StepFailure(f"no convergence within {max_steps} steps")
