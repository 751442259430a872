"""Central finite differences used as fallbacks for analytic derivatives.

Step size is scaled per coordinate as ``step * (1 + |x_i|)`` so that the
same relative accuracy holds for states of very different magnitudes.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

DEFAULT_STEP = 1e-6


def central_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                     step: float = DEFAULT_STEP) -> np.ndarray:
    """Gradient of a scalar function by central differences."""
    x = np.asarray(x, dtype=float)
    grad = np.empty(x.size)
    for i in range(x.size):
        h = step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def central_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                     step: float = DEFAULT_STEP) -> np.ndarray:
    """Jacobian of a vector function by central differences, shape (len(f(x)), len(x))."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (np.asarray(f(xp), dtype=float) - np.asarray(f(xm), dtype=float)) / (2.0 * h)
    return jac


def directional_derivative(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                           direction: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Derivative of f along a direction, i.e. J_f(x) @ direction, without forming J_f.

    Costs two evaluations of f regardless of the input dimension.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    scale = float(np.abs(d).max())
    if scale == 0.0:
        return np.zeros_like(np.asarray(f(x), dtype=float))
    h = step * (1.0 + float(np.abs(x).max())) / scale
    fp = np.asarray(f(x + h * d), dtype=float)
    fm = np.asarray(f(x - h * d), dtype=float)
    return (fp - fm) / (2.0 * h)
