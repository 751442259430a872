"""Reduced-order control barrier functions and the closed-form safety filter.

The filter solves, in closed form, the single-constraint projection

    min_v  0.5 ||v - kappa_d(y)||^2   s.t.   a . v >= b

where the half-space comes from an input-to-state safe barrier condition:
a is the actuated gradient L_g h and b collects the barrier decay rate
together with robustness margins (1/eps)||L_g h||^2 and (1/sig)||grad h||^2
that budget for tracking error and model mismatch. Multiple obstacles are
merged into one barrier with a log-sum-exp soft minimum so a single
constraint always suffices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, InfeasibleFilterError
from .numdiff import central_gradient
from .rom import ReducedOrderModel, Vector

DEGENERATE_NORMAL = 1e-12


@dataclass(frozen=True)
class ReducedCbf:
    """Scalar barrier h on the reduced state; h >= 0 is the safe region."""

    h: Callable[[Vector], float]
    grad_h: Optional[Callable[[Vector], Vector]] = None
    name: str = "cbf"

    def value(self, y: Vector) -> float:
        return float(self.h(np.asarray(y, dtype=float)))

    def gradient(self, y: Vector) -> Vector:
        y = np.asarray(y, dtype=float)
        if self.grad_h is not None:
            return np.asarray(self.grad_h(y), dtype=float)
        return central_gradient(lambda z: float(self.h(z)), y)


@dataclass(frozen=True)
class FilterGains:
    """Gains of the barrier condition.

    sigma=None omits the gradient robustness term entirely; use it when the
    actuated gradient equals the full gradient and the term is redundant.
    mu scales the tracking certificate inside the composite barrier.
    """

    alpha: float
    epsilon: float
    mu: float = 1.0
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.alpha <= 0 or self.epsilon <= 0 or self.mu <= 0:
            raise ValueError("alpha, epsilon and mu must be positive")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive when present")


def _lie_terms(cbf: ReducedCbf, rom: ReducedOrderModel, y: Vector):
    """Returns (h, grad_h, L_f h, L_g h) at y."""
    y = np.asarray(y, dtype=float)
    h = cbf.value(y)
    grad = cbf.gradient(y)
    lf = float(grad @ np.asarray(rom.f(y), dtype=float))
    lg = grad @ np.asarray(rom.g(y), dtype=float)
    return h, grad, lf, lg


def _constraint_halfspace(cbf: ReducedCbf, rom: ReducedOrderModel, gains: FilterGains,
                          y: Vector, margin: float = 0.0):
    """The barrier condition as a half-space a . v >= b in the reduced input."""
    h, grad, lf, lg = _lie_terms(cbf, rom, y)
    b = -gains.alpha * h + float(lg @ lg) / gains.epsilon - lf + margin
    if gains.sigma is not None:
        b += float(grad @ grad) / gains.sigma
    return np.asarray(lg, dtype=float), b


def issf_residual(cbf: ReducedCbf, rom: ReducedOrderModel, gains: FilterGains,
                  y: Vector, v: Vector) -> float:
    """Slack of the robust barrier condition at (y, v); positive means it holds strictly.

    L_f h + L_g h . v + alpha h - (1/eps)||L_g h||^2 - (1/sig)||grad h||^2.
    """
    a, b = _constraint_halfspace(cbf, rom, gains, y)
    return float(a @ np.asarray(v, dtype=float)) - b


def safety_filter(cbf: ReducedCbf, rom: ReducedOrderModel, gains: FilterGains,
                  kappa_d: Callable[[Vector], Vector], y: Vector,
                  margin: float = 0.0) -> Vector:
    """Minimally modify the nominal command so the barrier condition holds.

    Passthrough when the constraint is already satisfied (including exactly
    active); otherwise the closed-form projection onto the half-space. The
    output satisfies the constraint with equality whenever it is active.
    """
    y = np.asarray(y, dtype=float)
    v_d = np.asarray(kappa_d(y), dtype=float)
    if v_d.shape != (rom.input_dim,):
        raise ContractError(f"nominal command has shape {v_d.shape}, "
                            f"expected ({rom.input_dim},)")
    a, b = _constraint_halfspace(cbf, rom, gains, y, margin)
    gap = b - float(a @ v_d)
    if gap <= 0.0:
        return v_d
    norm_sq = float(a @ a)
    if norm_sq <= DEGENERATE_NORMAL ** 2:
        raise InfeasibleFilterError(
            f"barrier '{cbf.name}' is degenerate at y={y.tolist()}: "
            "constraint active with vanishing normal")
    return v_d + (gap / norm_sq) * a


def make_safety_controller(cbf: ReducedCbf, rom: ReducedOrderModel, gains: FilterGains,
                           kappa_d: Callable[[Vector], Vector],
                           margin: float = 0.0) -> Callable[[Vector], Vector]:
    """Bind the filter into a state-feedback reduced controller kappa(y)."""

    def kappa(y: Vector) -> Vector:
        return safety_filter(cbf, rom, gains, kappa_d, y, margin)

    return kappa


def smooth_combine(cbfs: Sequence[ReducedCbf], kappa_smooth: float) -> ReducedCbf:
    """Soft minimum of several barriers: h = -(1/k) log sum exp(-k h_i).

    Always under-approximates min_i h_i, so positivity of the combined
    barrier certifies positivity of every component. Larger kappa_smooth
    tightens the approximation.
    """
    if not cbfs:
        raise ValueError("need at least one barrier to combine")
    if kappa_smooth <= 0:
        raise ValueError("kappa_smooth must be positive")
    parts = list(cbfs)
    k = float(kappa_smooth)

    def h(y: Vector) -> float:
        vals = np.array([c.value(y) for c in parts])
        lo = float(vals.min())
        return lo - math.log(float(np.sum(np.exp(-k * (vals - lo))))) / k

    def grad_h(y: Vector) -> Vector:
        vals = np.array([c.value(y) for c in parts])
        w = np.exp(-k * (vals - vals.min()))
        w /= w.sum()
        grads = np.array([c.gradient(y) for c in parts])
        return w @ grads

    name = "softmin(" + ",".join(c.name for c in parts) + ")"
    return ReducedCbf(h=h, grad_h=grad_h, name=name)


def circular_obstacle_cbf(center: Sequence[float], radius: float) -> ReducedCbf:
    """Barrier for staying outside a disk: h(y) = ||y - center||^2 - radius^2."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    c = np.asarray(center, dtype=float)
    r_sq = float(radius) ** 2

    def h(y: Vector) -> float:
        d = np.asarray(y, dtype=float) - c
        return float(d @ d) - r_sq

    def grad_h(y: Vector) -> Vector:
        return 2.0 * (np.asarray(y, dtype=float) - c)

    return ReducedCbf(h=h, grad_h=grad_h,
                      name=f"disk(({c[0]:g},{c[1]:g}),r={radius:g})")
