"""Concrete plants: a quadrotor with a velocity-tracking interface and a
planar double integrator whose tracking certificate is exact.

Both plants project onto a planar single integrator: the reduced state is
the (x, y) position and the reduced input is the planar velocity. The
quadrotor follows the usual rigid-body convention with a scalar-first
unit quaternion and body-frame angular rates; its attitude kinematics are
the standard quaternion kinematics q' = 0.5 * q * (0, omega).

The double integrator exists as ground truth: its interface is a
backstepping law under which the candidate V = rho ||v - kappa(y)||^2
decreases at exactly twice the velocity gain, with zero offset and zero
model discrepancy, so every certificate check should pass with no slack.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .certificates import SimulationCertificate
from .numdiff import central_jacobian, directional_derivative
from .rom import (FullOrderModel, ProjectionPair, ReducedOrderModel, RomSystem,
                  Vector)
from .sampling import Box

logger = logging.getLogger(__name__)

_E_Z = np.array([0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# Quaternion helpers (scalar-first convention).

def quat_multiply(q1: Vector, q2: Vector) -> Vector:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_normalize(q: Vector) -> Vector:
    q = np.asarray(q, dtype=float)
    return q / math.sqrt(float(q @ q))


def quat_to_rotation(q: Vector) -> np.ndarray:
    """Rotation matrix of a quaternion; tolerant of slightly non-unit input."""
    w, x, y, z = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_axis_angle(axis: Vector, angle: float) -> Vector:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


# ---------------------------------------------------------------------------
# Quadrotor.

@dataclass(frozen=True)
class QuadrotorParams:
    """Physical constants and interface gains.

    k_v drives velocity error to desired acceleration, k_z regulates
    altitude through a vertical velocity command, k_R turns attitude error
    into body rates. Defaults are desk-scale fixtures.
    """

    mass: float = 1.0
    gravity: float = 9.81
    hover_altitude: float = 1.0
    k_v: float = 5.0
    k_z: float = 2.0
    k_R: float = 8.0

    def __post_init__(self):
        for name in ("mass", "gravity", "hover_altitude", "k_v", "k_z", "k_R"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class QuadrotorState:
    """Structured view of the 10-dimensional state (p, q, pdot)."""

    p: np.ndarray
    q: np.ndarray
    pdot: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.q = quat_normalize(self.q)
        self.pdot = np.asarray(self.pdot, dtype=float)

    def as_vector(self) -> Vector:
        return np.concatenate([self.p, self.q, self.pdot])

    @classmethod
    def from_vector(cls, x: Vector) -> "QuadrotorState":
        x = np.asarray(x, dtype=float)
        return cls(p=x[0:3], q=x[3:7], pdot=x[7:10])


def quadrotor_dynamics(params: QuadrotorParams, x: Vector, u: Vector) -> Vector:
    """State derivative for input u = (body rates omega, thrust tau)."""
    omega = u[0:3]
    tau = float(u[3])
    if tau < 0:
        raise ValueError(f"thrust must be nonnegative, got {tau}")
    q = x[3:7]
    qdot = 0.5 * quat_multiply(q, np.concatenate(([0.0], omega)))
    # Thrust acts along the body z-axis, the third rotation matrix column.
    accel = -params.gravity * _E_Z + (tau / params.mass) * quat_to_rotation(q)[:, 2]
    out = np.empty(10)
    out[0:3] = x[7:10]
    out[3:7] = qdot
    out[7:10] = accel
    return out


def quadrotor_interface(params: QuadrotorParams, kappa: Callable[[Vector], Vector],
                        x: Vector) -> Vector:
    """Velocity-tracking controller u = (omega, tau) realizing planar commands.

    The planar command kappa(pi(x)) is augmented with an altitude-hold
    vertical velocity, converted to a desired acceleration and then to a
    thrust along the current body z-axis plus roll/pitch rates steering
    that axis toward the desired one. Yaw is left uncontrolled. Thrust is
    clamped at zero; clamping invalidates the tracking certificate locally
    and is logged at debug level.
    """
    x = np.asarray(x, dtype=float)
    p, q, pdot = x[0:3], x[3:7], x[7:10]
    v_cmd = np.asarray(kappa(p[0:2]), dtype=float)
    v_des = np.array([v_cmd[0], v_cmd[1], params.k_z * (params.hover_altitude - p[2])])
    a_des = params.k_v * (v_des - pdot) + params.gravity * _E_Z
    a_norm = math.sqrt(float(a_des @ a_des))
    if a_norm <= 1e-9:
        return np.array([0.0, 0.0, 0.0, params.mass * params.gravity])
    rot = quat_to_rotation(q)
    b3 = rot[:, 2]
    tau = params.mass * float(a_des @ b3)
    if tau < 0.0:
        logger.debug("thrust clamped to zero at p=%s, pdot=%s", p, pdot)
        tau = 0.0
    b3_des = a_des / a_norm
    tilt = np.array([b3[1] * b3_des[2] - b3[2] * b3_des[1],
                     b3[2] * b3_des[0] - b3[0] * b3_des[2],
                     b3[0] * b3_des[1] - b3[1] * b3_des[0]])
    omega = params.k_R * (rot.T @ tilt)
    omega[2] = 0.0
    return np.concatenate([omega, [tau]])


def make_quadrotor_interface(params: QuadrotorParams,
                             kappa: Callable[[Vector], Vector]) -> Callable[[Vector], Vector]:
    def k(x: Vector) -> Vector:
        return quadrotor_interface(params, kappa, x)

    return k


def single_integrator_rom() -> ReducedOrderModel:
    """Planar single integrator: y' = v."""
    eye = np.eye(2)
    return ReducedOrderModel(dim=2, input_dim=2,
                             f=lambda y: np.zeros(2),
                             g=lambda y: eye)


def _planar_projection(state_dim: int, pos_idx: tuple[int, int],
                       vel_idx: tuple[int, int]) -> ProjectionPair:
    jac = np.zeros((2, state_dim))
    jac[0, pos_idx[0]] = 1.0
    jac[1, pos_idx[1]] = 1.0

    def state_map(x):
        return np.array([x[pos_idx[0]], x[pos_idx[1]]])

    def control_map(x):
        return np.array([x[vel_idx[0]], x[vel_idx[1]]])

    return ProjectionPair(state_map=state_map, control_map=control_map,
                          state_map_jacobian=lambda x: jac)


def quadrotor_system(params: QuadrotorParams) -> RomSystem:
    """Quadrotor projected onto the planar single integrator.

    The projected dynamics equal the reduced input exactly, so the model
    discrepancy vanishes identically for every state and input.
    """
    fom = FullOrderModel(state_dim=10, input_dim=4,
                         dynamics=lambda x, u: quadrotor_dynamics(params, x, u),
                         quaternion_starts=(3,))
    proj = _planar_projection(10, (0, 1), (7, 8))
    return RomSystem(fom=fom, proj=proj, rom=single_integrator_rom())


def quadrotor_candidate_V(kappa: Callable[[Vector], Vector]):
    """Squared tracking residual as the certificate candidate for the quadrotor.

    Returns (V, grad_V); the gradient is exact in the state given the
    command Jacobian, which is taken by central differences since filtered
    commands are only piecewise smooth.
    """

    def V(x: Vector) -> float:
        e = x[7:9] - np.asarray(kappa(x[0:2]), dtype=float)
        return float(e @ e)

    def grad_V(x: Vector) -> Vector:
        y = x[0:2]
        e = x[7:9] - np.asarray(kappa(y), dtype=float)
        jac = central_jacobian(kappa, y)
        g = np.zeros(10)
        g[0:2] = -2.0 * jac.T @ e
        g[7:9] = 2.0 * e
        return g

    return V, grad_V


DEFAULT_QUADROTOR_DOMAIN = Box(
    lo=np.array([-1.0, -3.0, 0.4, 0.90, -0.2, -0.2, -0.2, -2.5, -2.5, -2.5]),
    hi=np.array([4.0, 3.0, 1.6, 1.00, 0.2, 0.2, 0.2, 2.5, 2.5, 2.5]),
)


def quadrotor_level_state(p_xy=(0.0, 0.0), altitude: Optional[float] = None,
                          v_xy=(0.0, 0.0), v_z: float = 0.0,
                          params: Optional[QuadrotorParams] = None) -> Vector:
    """Level-attitude state vector, convenient for fixtures and start sets."""
    alt = (params.hover_altitude if params is not None else 1.0) if altitude is None else altitude
    return np.array([p_xy[0], p_xy[1], alt, 1.0, 0.0, 0.0, 0.0,
                     v_xy[0], v_xy[1], v_z])


# ---------------------------------------------------------------------------
# Double integrator ground-truth plant.

@dataclass
class DoubleIntegratorState:
    """Structured view of the 4-dimensional state (position, velocity)."""

    y: np.ndarray
    v: np.ndarray

    def as_vector(self) -> Vector:
        return np.concatenate([np.asarray(self.y, dtype=float),
                               np.asarray(self.v, dtype=float)])

    @classmethod
    def from_vector(cls, x: Vector) -> "DoubleIntegratorState":
        x = np.asarray(x, dtype=float)
        return cls(y=x[0:2], v=x[2:4])


DEFAULT_DI_DOMAIN = Box(lo=np.array([-6.0, -6.0, -6.0, -6.0]),
                        hi=np.array([6.0, 6.0, 6.0, 6.0]))


def backstepping_interface(sys: RomSystem, kappa: Callable[[Vector], Vector],
                           gain: float,
                           kappa_jacobian: Optional[Callable[[Vector], np.ndarray]] = None,
                           ) -> Callable[[Vector], Vector]:
    """Interface u = d/dt kappa(y) - gain * (v - kappa(y)) for plants whose
    full-order input is the reduced-input derivative.

    Without an analytic command Jacobian the feedforward term
    differentiates the command along the reduced flow with a two-point
    directional derivative, so filtered (piecewise smooth) commands stay
    cheap to differentiate.
    """
    state_map = sys.proj.state_map
    control_map = sys.proj.control_map
    rom = sys.rom

    def k(x: Vector) -> Vector:
        y = state_map(x)
        v = control_map(x)
        ydot = rom.f(y) + rom.g(y) @ v
        if kappa_jacobian is not None:
            feedforward = np.asarray(kappa_jacobian(y), dtype=float) @ ydot
        else:
            feedforward = directional_derivative(kappa, y, ydot)
        return feedforward - gain * (v - np.asarray(kappa(y), dtype=float))

    return k


def double_integrator_system(K: float, kappa: Callable[[Vector], Vector], *,
                             rho: float = 1.0, beta: float = 1.0,
                             domain: Optional[Box] = None,
                             kappa_jacobian: Optional[Callable[[Vector], np.ndarray]] = None,
                             ) -> tuple[RomSystem, SimulationCertificate]:
    """Planar double integrator with an exact tracking certificate.

    The full model is y' = v, v' = u with the backstepping interface
    u = Dkappa(y) v - K (v - kappa(y)). Along the closed loop the candidate
    V = rho ||v - kappa(y)||^2 satisfies dV/dt = -2K V identically, so the
    certificate constants are lam = 2K and iota = 0. beta is a fixture:
    V is flat in position, so no sublevel set is bounded and the face
    sampling estimator does not apply.
    """
    if K <= 0:
        raise ValueError("K must be positive")

    def dynamics(x, u):
        out = np.empty(4)
        out[0:2] = x[2:4]
        out[2:4] = u
        return out

    fom = FullOrderModel(state_dim=4, input_dim=2, dynamics=dynamics)
    proj = _planar_projection(4, (0, 1), (2, 3))
    sys = RomSystem(fom=fom, proj=proj, rom=single_integrator_rom())

    interface = backstepping_interface(sys, kappa, gain=K,
                                       kappa_jacobian=kappa_jacobian)

    def kappa_jac(y):
        if kappa_jacobian is not None:
            return np.asarray(kappa_jacobian(y), dtype=float)
        return central_jacobian(kappa, y)

    def V(x: Vector) -> float:
        e = x[2:4] - np.asarray(kappa(x[0:2]), dtype=float)
        return rho * float(e @ e)

    def grad_V(x: Vector) -> Vector:
        y = x[0:2]
        e = x[2:4] - np.asarray(kappa(y), dtype=float)
        g = np.empty(4)
        g[0:2] = -2.0 * rho * kappa_jac(y).T @ e
        g[2:4] = 2.0 * rho * e
        return g

    cert = SimulationCertificate(V=V, k=interface, rho=rho, lam=2.0 * K, iota=0.0,
                                 beta=beta, domain=domain or DEFAULT_DI_DOMAIN,
                                 grad_V=grad_V)
    return sys, cert


def clocked_double_integrator_system(K: float, kappa: Callable[[Vector], Vector], *,
                                     rho: float = 1.0, beta: float = 1.0,
                                     horizon: float = 60.0,
                                     domain: Optional[Box] = None,
                                     ) -> tuple[RomSystem, SimulationCertificate]:
    """Double integrator with a clock coordinate for replaying timed commands.

    State (y, v, c) with c' = 1; the reduced state is (y, c) so commands
    may depend on elapsed time while the closed loop stays autonomous. The
    reduced model is a single integrator carrying the clock along, and the
    discrepancy is still identically zero.
    """
    if K <= 0:
        raise ValueError("K must be positive")

    def dynamics(x, u):
        out = np.empty(5)
        out[0:2] = x[2:4]
        out[2:4] = u
        out[4] = 1.0
        return out

    fom = FullOrderModel(state_dim=5, input_dim=2, dynamics=dynamics)

    jac = np.zeros((3, 5))
    jac[0, 0] = jac[1, 1] = jac[2, 4] = 1.0
    proj = ProjectionPair(state_map=lambda x: np.array([x[0], x[1], x[4]]),
                          control_map=lambda x: np.array([x[2], x[3]]),
                          state_map_jacobian=lambda x: jac)

    g_mat = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    rom = ReducedOrderModel(dim=3, input_dim=2,
                            f=lambda y: np.array([0.0, 0.0, 1.0]),
                            g=lambda y: g_mat)
    sys = RomSystem(fom=fom, proj=proj, rom=rom)

    interface = backstepping_interface(sys, kappa, gain=K)

    def V(x: Vector) -> float:
        e = x[2:4] - np.asarray(kappa(np.array([x[0], x[1], x[4]])), dtype=float)
        return rho * float(e @ e)

    if domain is None:
        domain = Box(lo=np.array([-10.0, -10.0, -10.0, -10.0, 0.0]),
                     hi=np.array([10.0, 10.0, 10.0, 10.0, horizon]))
    cert = SimulationCertificate(V=V, k=interface, rho=rho, lam=2.0 * K, iota=0.0,
                                 beta=beta, domain=domain)
    return sys, cert


# ---------------------------------------------------------------------------
# Registry for CLI configuration.

PLANT_REGISTRY = {
    "quadrotor": quadrotor_system,
    "double_integrator": double_integrator_system,
}
