"""Axis-aligned boxes and deterministic low-discrepancy sampling.

All sampling in the package goes through Sobol sequences with explicit
seeds so that every sweep, check and report is reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import qmc


@dataclass(frozen=True)
class Box:
    """Axis-aligned box {x : lo <= x <= hi}."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(hi < lo):
            raise ValueError("box upper bounds must dominate lower bounds")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        """n Sobol points in the box, shape (n, dim). Deterministic per seed."""
        if n < 1:
            raise ValueError("need n >= 1 samples")
        eng = qmc.Sobol(d=self.dim, scramble=True, seed=seed)
        m = max(1, int(np.ceil(np.log2(n))))
        pts = eng.random_base2(m)[:n]
        return qmc.scale(pts, self.lo, self.hi)

    def face_samples(self, n_per_face: int, seed: int = 0) -> np.ndarray:
        """Sobol points on all 2*dim boundary faces, shape (2*dim*n_per_face, dim)."""
        out = []
        for i in range(self.dim):
            for k, bound in enumerate((self.lo[i], self.hi[i])):
                pts = self.sample(n_per_face, seed=seed + 7919 * (2 * i + k) + 1)
                pts[:, i] = bound
                out.append(pts)
        return np.vstack(out)

    def exit_time(self, x: np.ndarray, direction: np.ndarray) -> float:
        """Largest t >= 0 with x + t*direction still inside the box."""
        x = np.asarray(x, dtype=float)
        d = np.asarray(direction, dtype=float)
        t_max = np.inf
        for i in range(self.dim):
            if d[i] > 0:
                t_max = min(t_max, (self.hi[i] - x[i]) / d[i])
            elif d[i] < 0:
                t_max = min(t_max, (self.lo[i] - x[i]) / d[i])
        return max(t_max, 0.0)


def bisect_to_level(f: Callable[[float], float], t_lo: float, t_hi: float,
                    n_iter: int = 60) -> float:
    """Bisect for a sign change of f on [t_lo, t_hi]; f(t_lo) and f(t_hi) must differ in sign."""
    f_lo = f(t_lo)
    for _ in range(n_iter):
        t_mid = 0.5 * (t_lo + t_hi)
        f_mid = f(t_mid)
        if (f_mid > 0) == (f_lo > 0):
            t_lo, f_lo = t_mid, f_mid
        else:
            t_hi = t_mid
    return 0.5 * (t_lo + t_hi)
