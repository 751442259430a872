"""Deterministic fixed-step closed-loop simulation with certificate logging.

Classic fourth-order Runge-Kutta with a fixed step: no adaptivity, so two
runs of the same configuration produce bit-identical logs and convergence
order can be measured by step halving. Commands are sampled zero-order
within a step through the interface closure. Quaternion blocks declared
by the plant are renormalized after every step.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .barriers import CompositeBarrier
from .errors import RolloutDiverged
from .rom import RomSystem, Vector


@dataclass(frozen=True)
class RolloutConfig:
    """Fixed-step integration settings."""

    dt: float = 1e-3
    horizon: float = 1.0
    initial_state: np.ndarray = field(default_factory=lambda: np.zeros(1))
    log_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon < self.dt:
            raise ValueError("horizon must cover at least one step")
        if self.log_stride < 1:
            raise ValueError("log_stride must be a positive integer")
        object.__setattr__(self, "initial_state",
                           np.asarray(self.initial_state, dtype=float))


_SCALAR_COLUMNS = ("t", "h", "V", "B", "Bdelta", "Bbeta", "residual")
_VECTOR_COLUMNS = ("x", "y", "v", "u")


@dataclass
class RolloutLog:
    """Columnar log of a rollout; one row per logged step."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    u: np.ndarray
    h: np.ndarray
    V: np.ndarray
    B: np.ndarray
    Bdelta: np.ndarray
    Bbeta: np.ndarray
    residual: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        """Scalar column by name; vector components as e.g. 'x_2'."""
        if name in _SCALAR_COLUMNS:
            return getattr(self, name)
        base, _, idx = name.rpartition("_")
        if base in _VECTOR_COLUMNS and idx.isdigit():
            arr = getattr(self, base)
            j = int(idx)
            if j < arr.shape[1]:
                return arr[:, j]
        raise KeyError(f"no column named {name!r}")

    def header(self) -> list[str]:
        cols = ["t"]
        for base in _VECTOR_COLUMNS:
            cols += [f"{base}_{j}" for j in range(getattr(self, base).shape[1])]
        cols += ["h", "V", "B", "Bdelta", "Bbeta", "residual"]
        return cols

    def to_csv(self, path_or_file) -> None:
        """Write the log as CSV. Floats use shortest round-trip formatting,
        so identical logs serialize to identical bytes."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            fh.write(",".join(self.header()) + "\n")
            for i in range(len(self)):
                row = [self.t[i]]
                for base in _VECTOR_COLUMNS:
                    row.extend(getattr(self, base)[i])
                row += [self.h[i], self.V[i], self.B[i], self.Bdelta[i],
                        self.Bbeta[i], self.residual[i]]
                fh.write(",".join(repr(float(val)) for val in row) + "\n")
        finally:
            if own:
                fh.close()

    def to_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue().encode()


def _renormalize(x: np.ndarray, quaternion_starts: tuple[int, ...]) -> None:
    for start in quaternion_starts:
        block = x[start:start + 4]
        x[start:start + 4] = block / math.sqrt(float(block @ block))


def rollout(sys: RomSystem, interface: Callable[[Vector], Vector],
            barrier: Optional[CompositeBarrier], cfg: RolloutConfig, *,
            kappa: Optional[Callable[[Vector], Vector]] = None) -> RolloutLog:
    """Integrate x' = F(x, interface(x)) and log certificate quantities.

    barrier supplies h, V and the composite values; without one those
    columns are NaN. kappa is the reduced controller used for the residual
    column. Raises RolloutDiverged (carrying the partial log) if the state
    leaves the finite range.
    """
    fom = sys.fom
    state_map = sys.proj.state_map
    control_map = sys.proj.control_map
    quat_starts = fom.quaternion_starts
    dt = cfg.dt
    n_steps = int(round(cfg.horizon / dt))

    rows_t, rows_x, rows_y, rows_v, rows_u = [], [], [], [], []
    rows_scalar = []  # (h, V, B, Bdelta, Bbeta, residual)

    def log_row(i: int, x: np.ndarray) -> None:
        y = np.asarray(state_map(x), dtype=float)
        v = np.asarray(control_map(x), dtype=float)
        u = np.asarray(interface(x), dtype=float)
        if barrier is not None:
            h_val = barrier.cbf.value(y)
            v_val = barrier.cert.value(x)
            b_val = h_val - v_val / barrier.gains.mu
            bd_val = b_val + barrier.inflation
            bb_val = barrier.cert.beta - v_val
        else:
            h_val = v_val = b_val = bd_val = bb_val = np.nan
        if kappa is not None:
            res = float(np.linalg.norm(v - np.asarray(kappa(y), dtype=float)))
        else:
            res = np.nan
        rows_t.append(i * dt)
        rows_x.append(x.copy())
        rows_y.append(y)
        rows_v.append(v)
        rows_u.append(u)
        rows_scalar.append((h_val, v_val, b_val, bd_val, bb_val, res))

    def build_log() -> RolloutLog:
        scal = np.array(rows_scalar) if rows_scalar else np.zeros((0, 6))
        return RolloutLog(
            t=np.array(rows_t), x=np.array(rows_x), y=np.array(rows_y),
            v=np.array(rows_v), u=np.array(rows_u),
            h=scal[:, 0], V=scal[:, 1], B=scal[:, 2], Bdelta=scal[:, 3],
            Bbeta=scal[:, 4], residual=scal[:, 5])

    x = cfg.initial_state.copy()
    if x.shape != (fom.state_dim,):
        raise ValueError(f"initial state has shape {x.shape}, "
                         f"expected ({fom.state_dim},)")

    def f(z: np.ndarray) -> np.ndarray:
        return fom(z, np.asarray(interface(z), dtype=float))

    log_row(0, x)
    for i in range(n_steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if quat_starts:
            _renormalize(x, quat_starts)
        if not np.all(np.isfinite(x)):
            raise RolloutDiverged(f"state became non-finite at t={(i + 1) * dt:.6g}",
                                  log=build_log())
        if (i + 1) % cfg.log_stride == 0 or i + 1 == n_steps:
            log_row(i + 1, x)
    return build_log()


def min_over_rollout(log: RolloutLog, column: str) -> tuple[float, float]:
    """Minimum of a column and the first time it is attained: (t_min, value)."""
    if len(log) == 0:
        raise ValueError("empty rollout log")
    values = log.column(column)
    idx = int(np.argmin(values))
    return float(log.t[idx]), float(values[idx])
