"""Tracking certificates: Lyapunov-like functions that bound command tracking.

A certificate pairs a nonnegative function V with an interface k (the
full-order controller that realizes reduced-order commands) and constants
(rho, lam, iota, beta) such that, on the domain box,

    V(x) >= rho ||psi(x) - kappa(pi(x))||^2
    dV/dt along x' = F(x, k(x)) <= -lam V(x) + iota

from which the squared tracking residual obeys the exponential envelope
V(x0)/rho * exp(-lam t) + iota/(lam rho). All checks here are sampling
based falsification, not proofs; reports say exactly what was sampled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import EstimationError
from .numdiff import central_gradient
from .rom import RomSystem, Vector, surface_residual
from .sampling import Box

LOWER_BOUND_TOL = 1e-9
DECREASE_TOL = 1e-7
REGULAR_VALUE_BAND = 1e-3
REGULAR_VALUE_GRAD_MIN = 1e-6


@dataclass(frozen=True)
class SimulationCertificate:
    """Certificate that the interface k makes the plant track reduced commands.

    beta is the sublevel value of V whose sublevel set stays inside the
    domain box; trajectories started there are covered by the guarantee.
    Construction enforces beta > iota/lam, without which the sublevel set
    is not attracting.
    """

    V: Callable[[Vector], float]
    k: Callable[[Vector], Vector]
    rho: float
    lam: float
    iota: float
    beta: float
    domain: Box
    grad_V: Optional[Callable[[Vector], Vector]] = None

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.iota < 0:
            raise ValueError("iota must be nonnegative")
        if self.beta <= self.iota / self.lam:
            raise ValueError(
                f"beta={self.beta} must exceed iota/lam={self.iota / self.lam}")

    def value(self, x: Vector) -> float:
        return float(self.V(np.asarray(x, dtype=float)))

    def gradient(self, x: Vector) -> Vector:
        x = np.asarray(x, dtype=float)
        if self.grad_V is not None:
            return np.asarray(self.grad_V(x), dtype=float)
        return central_gradient(lambda z: float(self.V(z)), x)

    def decrease_rate(self, sys: RomSystem, x: Vector) -> float:
        """dV/dt along the closed loop x' = F(x, k(x))."""
        u = np.asarray(self.k(x), dtype=float)
        return float(self.gradient(x) @ sys.fom(np.asarray(x, dtype=float), u))

    def in_sublevel(self, x: Vector) -> bool:
        return self.value(x) <= self.beta


@dataclass(frozen=True)
class TrackingEnvelope:
    """Exponential bound on the squared tracking residual from a given start."""

    v0: float
    rho: float
    lam: float
    iota: float

    def __post_init__(self):
        if self.v0 < 0:
            raise ValueError("v0 must be nonnegative")

    @classmethod
    def from_certificate(cls, cert: SimulationCertificate, x0: Vector) -> "TrackingEnvelope":
        return cls(v0=cert.value(x0), rho=cert.rho, lam=cert.lam, iota=cert.iota)

    def bound(self, t):
        return tracking_bound(self, t)


def tracking_bound(env: TrackingEnvelope, t):
    """Envelope value v0/rho * exp(-lam t) + iota/(lam rho); t may be an array."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    out = env.v0 / env.rho * np.exp(-env.lam * t) + env.iota / (env.lam * env.rho)
    return float(out) if out.ndim == 0 else out


@dataclass
class CheckReport:
    """Outcome of one sampling-based check."""

    check: str
    n_samples: int
    worst_margin: float
    worst_point: Optional[np.ndarray]
    status: str  # "pass" | "fail" | "inconclusive"

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def as_dict(self) -> dict:
        return {
            "check": self.check,
            "n_samples": self.n_samples,
            "worst_margin": None if not np.isfinite(self.worst_margin) else float(self.worst_margin),
            "worst_point": None if self.worst_point is None else [float(v) for v in self.worst_point],
            "pass": None if self.status == "inconclusive" else self.passed,
            "status": self.status,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def _stack_samples(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("need a nonempty 2-D array of sample states")
    return arr


def check_lower_bound(cert: SimulationCertificate, sys: RomSystem,
                      kappa: Callable[[Vector], Vector], samples) -> CheckReport:
    """Falsify V(x) >= rho * ||residual||^2 on the given samples."""
    pts = _stack_samples(samples)
    worst = np.inf
    worst_x = None
    for x in pts:
        res = surface_residual(sys, kappa, x)
        margin = cert.value(x) - cert.rho * float(res @ res)
        if margin < worst:
            worst, worst_x = margin, x
    status = "pass" if worst >= -LOWER_BOUND_TOL else "fail"
    return CheckReport("lower_bound", len(pts), worst, worst_x, status)


def check_decrease(cert: SimulationCertificate, sys: RomSystem, samples) -> CheckReport:
    """Falsify dV/dt <= -lam V + iota along the closed loop on the samples.

    worst_margin is the largest violation dV/dt + lam V - iota; small positive
    values up to the finite-difference slack still pass.
    """
    pts = _stack_samples(samples)
    worst = -np.inf
    worst_x = None
    for x in pts:
        viol = cert.decrease_rate(sys, x) + cert.lam * cert.value(x) - cert.iota
        if viol > worst:
            worst, worst_x = viol, x
    status = "pass" if worst <= DECREASE_TOL else "fail"
    return CheckReport("decrease", len(pts), worst, worst_x, status)


def check_regular_value(cert: SimulationCertificate, boundary_samples) -> CheckReport:
    """Check that beta is a regular value of V: grad V does not vanish on the level set.

    Only samples within REGULAR_VALUE_BAND of the level are admissible; with
    none, the result is inconclusive rather than a failure.
    """
    pts = _stack_samples(boundary_samples)
    near = [x for x in pts if abs(cert.value(x) - cert.beta) <= REGULAR_VALUE_BAND]
    if not near:
        return CheckReport("regular_value", 0, np.nan, None, "inconclusive")
    worst = np.inf
    worst_x = None
    for x in near:
        gnorm = float(np.linalg.norm(cert.gradient(x)))
        if gnorm < worst:
            worst, worst_x = gnorm, x
    # beta > iota/lam is a constructor invariant; re-verified to keep the
    # report self-contained.
    ok = worst >= REGULAR_VALUE_GRAD_MIN and cert.beta > cert.iota / cert.lam
    return CheckReport("regular_value", len(near), worst, worst_x,
                       "pass" if ok else "fail")


def estimate_constants(sys: RomSystem, kappa: Callable[[Vector], Vector],
                       V: Callable[[Vector], float], k: Callable[[Vector], Vector],
                       states, fresh_states=None, *,
                       grad_V: Optional[Callable[[Vector], Vector]] = None,
                       residual_floor: float = 1e-6,
                       shift_margin: float = 1.05,
                       rho_floor: float = 1e-9) -> tuple[float, float, float]:
    """Fit (rho, lam, iota) for a candidate V from visited states.

    rho is the infimum of V / ||residual||^2 over samples with a residual
    above the floor. (lam, iota) come from a least-squares line through
    (V, dV/dt) followed by a conservative upward shift of iota so the line
    dominates every sample; when fresh_states are supplied, iota is bumped
    again until it also dominates those.
    """
    pts = _stack_samples(states)

    def grad(x):
        if grad_V is not None:
            return np.asarray(grad_V(x), dtype=float)
        return central_gradient(lambda z: float(V(z)), x)

    def evaluate(batch):
        vals = np.empty(len(batch))
        rates = np.empty(len(batch))
        res_sq = np.empty(len(batch))
        for i, x in enumerate(batch):
            vals[i] = float(V(x))
            rates[i] = float(grad(x) @ sys.fom(x, np.asarray(k(x), dtype=float)))
            r = surface_residual(sys, kappa, x)
            res_sq[i] = float(r @ r)
        return vals, rates, res_sq

    vals, rates, res_sq = evaluate(pts)

    mask = np.sqrt(res_sq) >= residual_floor
    if not np.any(mask):
        raise EstimationError("all samples sit on the command surface; "
                              "rho is unidentifiable")
    rho = max(float(np.min(vals[mask] / res_sq[mask])), rho_floor)

    # Least-squares line dV/dt ~ a V + b, then lam = -a.
    design = np.column_stack([vals, np.ones_like(vals)])
    (a, _b), *_ = np.linalg.lstsq(design, rates, rcond=None)
    lam = -float(a)
    if lam <= 0:
        raise EstimationError(f"fitted decay rate {lam:.3g} is not positive; "
                              "V does not decrease along the sampled motion")

    worst = float(np.max(rates + lam * vals))
    iota = max(0.0, worst) * shift_margin

    if fresh_states is not None:
        f_vals, f_rates, _ = evaluate(_stack_samples(fresh_states))
        f_worst = float(np.max(f_rates + lam * f_vals - iota))
        if f_worst > 0:
            iota += f_worst * shift_margin
    return rho, lam, iota


def estimate_beta(V: Callable[[Vector], float], box: Box, *,
                  n_per_face: int = 256, seed: int = 0,
                  shrink: float = 0.99, n_iter: int = 60) -> float:
    """Largest sublevel value whose sampled sublevel set stays inside the box.

    Bisection on beta against Sobol samples of the boundary faces: the
    sublevel set escapes the box exactly when some face sample has
    V <= beta. The result is shrunk by `shrink` as a safety factor. Only
    meaningful for V that actually grows toward the faces; a V that is
    flat along some coordinates will be pinned near zero here.
    """
    faces = box.face_samples(n_per_face, seed=seed)
    face_vals = np.array([float(V(x)) for x in faces])
    lo, hi = 0.0, float(face_vals.max()) + 1.0
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        if np.all(face_vals > mid):
            lo = mid
        else:
            hi = mid
    return shrink * lo
