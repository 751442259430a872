"""Full-order and reduced-order models tied together by projection maps.

A full-order model x' = F(x, u) is related to a control-affine reduced
model y' = f(y) + g(y) v through a state projection y = pi(x) and a
control projection v = psi(x). The operations here compute the projected
dynamics, the mismatch between projected and idealized dynamics, and the
residual that measures how far a state sits from perfect tracking of a
reduced-order command.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ContractError
from .numdiff import central_jacobian

Vector = np.ndarray


def _as_vector(x, length: int, what: str) -> Vector:
    x = np.asarray(x, dtype=float)
    if x.shape != (length,):
        raise ContractError(f"{what} must have shape ({length},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractError(f"{what} must be finite")
    return x


@dataclass(frozen=True)
class FullOrderModel:
    """High-dimensional control system x' = dynamics(x, u).

    quaternion_starts lists indices where 4-wide unit-quaternion blocks
    begin; the integrator renormalizes those blocks after every step.
    """

    state_dim: int
    input_dim: int
    dynamics: Callable[[Vector, Vector], Vector]
    quaternion_starts: tuple[int, ...] = ()

    def __call__(self, x: Vector, u: Vector) -> Vector:
        out = np.asarray(self.dynamics(x, u), dtype=float)
        if out.shape != (self.state_dim,):
            raise ContractError(
                f"dynamics returned shape {out.shape}, expected ({self.state_dim},)")
        return out


@dataclass(frozen=True)
class ProjectionPair:
    """Differentiable state projection and control projection.

    state_map_jacobian may be omitted; central differences are used then.
    """

    state_map: Callable[[Vector], Vector]
    control_map: Callable[[Vector], Vector]
    state_map_jacobian: Optional[Callable[[Vector], np.ndarray]] = None

    def jacobian(self, x: Vector) -> np.ndarray:
        if self.state_map_jacobian is not None:
            return np.asarray(self.state_map_jacobian(x), dtype=float)
        return central_jacobian(self.state_map, x)


@dataclass(frozen=True)
class ReducedOrderModel:
    """Idealized control-affine dynamics y' = f(y) + g(y) v."""

    dim: int
    input_dim: int
    f: Callable[[Vector], Vector]
    g: Callable[[Vector], np.ndarray]

    def assemble(self, y: Vector, v: Vector) -> Vector:
        out = np.asarray(self.f(y), dtype=float) + np.asarray(self.g(y), dtype=float) @ v
        if out.shape != (self.dim,):
            raise ContractError(f"reduced dynamics have shape {out.shape}, expected ({self.dim},)")
        return out


@dataclass(frozen=True)
class RomSystem:
    """A full-order model, its projections, and the reduced model they target."""

    fom: FullOrderModel
    proj: ProjectionPair
    rom: ReducedOrderModel


def project_state(sys: RomSystem, x: Vector) -> Vector:
    """Reduced state y = pi(x)."""
    x = _as_vector(x, sys.fom.state_dim, "state")
    y = np.asarray(sys.proj.state_map(x), dtype=float)
    if y.shape != (sys.rom.dim,):
        raise ContractError(f"state projection returned shape {y.shape}, "
                            f"expected ({sys.rom.dim},)")
    return y


def project_input(sys: RomSystem, x: Vector) -> Vector:
    """Reduced input v = psi(x)."""
    x = _as_vector(x, sys.fom.state_dim, "state")
    v = np.asarray(sys.proj.control_map(x), dtype=float)
    if v.shape != (sys.rom.input_dim,):
        raise ContractError(f"control projection returned shape {v.shape}, "
                            f"expected ({sys.rom.input_dim},)")
    return v


def projected_dynamics(sys: RomSystem, x: Vector, u: Vector) -> Vector:
    """Full-order dynamics pushed through the state projection: Dpi(x) F(x, u)."""
    x = _as_vector(x, sys.fom.state_dim, "state")
    u = _as_vector(u, sys.fom.input_dim, "input")
    return sys.proj.jacobian(x) @ sys.fom(x, u)


def discrepancy(sys: RomSystem, x: Vector, u: Vector, v: Vector) -> Vector:
    """Gap between the projected dynamics and the idealized reduced model.

    d = Dpi(x) F(x, u) - f(pi(x)) - g(pi(x)) v. Zero everywhere means the
    reduced model reproduces the projected motion exactly.
    """
    v = _as_vector(v, sys.rom.input_dim, "reduced input")
    y = project_state(sys, x)
    return projected_dynamics(sys, x, u) - sys.rom.assemble(y, v)


def surface_residual(sys: RomSystem, kappa: Callable[[Vector], Vector], x: Vector) -> Vector:
    """Tracking residual psi(x) - kappa(pi(x)); zero iff x sits on the command surface."""
    y = project_state(sys, x)
    v = project_input(sys, x)
    return v - np.asarray(kappa(y), dtype=float)
