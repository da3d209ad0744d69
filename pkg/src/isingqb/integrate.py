"""Classical RK4 with step doubling, used only to cross-check closed forms.

For a linear system ``dy/dt = M y`` with constant ``M`` one RK4 step of size
``h`` is multiplication by the degree-4 Taylor polynomial of ``hM``. Raising
that polynomial to the ``n``-th power is exactly ``n`` RK4 steps, which keeps
the oracle cheap without changing the method.
"""
from __future__ import annotations

import numpy as np


class IntegrationError(RuntimeError):
    """Raised when step doubling fails to reach the requested tolerance."""


MAX_DOUBLINGS = 26


def rk4_step_matrix(M: np.ndarray, h: float) -> np.ndarray:
    hM = h * M
    eye = np.eye(M.shape[0], dtype=complex)
    hM2 = hM @ hM
    return eye + hM + hM2 / 2 + hM2 @ hM / 6 + hM2 @ hM2 / 24


def rk4_linear(M: np.ndarray, y0: np.ndarray, duration: float, rtol: float = 1e-10) -> np.ndarray:
    """Integrate ``dy/dt = M y`` over ``duration`` with RK4 and Richardson control.

    The step count is doubled until two successive solutions differ by less
    than ``15 * rtol`` (the RK4 Richardson factor), and the extrapolated value
    is returned. ``y0`` may be a vector or a matrix of column vectors.
    """
    if duration < 0:
        raise ValueError(f"negative duration {duration!r}")
    y0 = np.asarray(y0, dtype=complex)
    if duration == 0:
        return y0.copy()
    M = np.asarray(M, dtype=complex)
    if not np.all(np.isfinite(M)):
        raise IntegrationError("non-finite generator")
    scale = max(np.linalg.norm(M, 2) * duration, 1e-300)
    n = max(1, int(np.ceil(scale / 0.25)))
    coarse = np.linalg.matrix_power(rk4_step_matrix(M, duration / n), n) @ y0
    ref = max(np.linalg.norm(y0), 1e-300)
    for _ in range(MAX_DOUBLINGS):
        n *= 2
        fine = np.linalg.matrix_power(rk4_step_matrix(M, duration / n), n) @ y0
        err = np.linalg.norm(fine - coarse) / 15
        if err <= rtol * ref:
            return fine + (fine - coarse) / 15
        coarse = fine
    raise IntegrationError(
        f"RK4 step doubling did not converge (n={n}, err={err:.3e}, rtol={rtol:.1e})"
    )


def rk4_adaptive(f, y0, t0: float, t1: float, rtol: float = 1e-10, n0: int = 64) -> np.ndarray:
    """Generic RK4 for ``dy/dt = f(t, y)`` with whole-interval step doubling."""
    y0 = np.asarray(y0, dtype=complex)

    def run(n):
        h = (t1 - t0) / n
        y = y0.copy()
        t = t0
        for i in range(n):
            k1 = f(t, y)
            k2 = f(t + h / 2, y + h / 2 * k1)
            k3 = f(t + h / 2, y + h / 2 * k2)
            k4 = f(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = t0 + (i + 1) * h
        return y

    n = n0
    coarse = run(n)
    ref = max(np.linalg.norm(y0), 1e-300)
    for _ in range(16):
        n *= 2
        fine = run(n)
        if np.linalg.norm(fine - coarse) / 15 <= rtol * ref:
            return fine + (fine - coarse) / 15
        coarse = fine
    raise IntegrationError(f"RK4 step doubling did not converge after n={n} steps")
