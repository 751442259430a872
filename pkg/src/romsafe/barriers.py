"""Composite barriers on the full-order state and numerical invariance checks.

Combining a reduced-order barrier h with a tracking certificate V gives
the full-order barrier B = h(pi(x)) - V(x)/mu, whose nonnegative set lies
inside the state constraint because V >= 0. The certified invariant set is
the intersection of an inflated version of that set with the certificate
sublevel region; invariance holds when the filter gain alpha, the
robustness gain epsilon and the certificate constants are compatible:

    lam >= alpha + epsilon * mu / (4 rho).

certify_invariance samples the boundary of the candidate set and checks
the strict differential inequalities that drive the inward-pointing
argument; this is falsification-style evidence, not a proof.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .certificates import SimulationCertificate
from .errors import InconclusiveError
from .filters import FilterGains, ReducedCbf
from .rom import RomSystem, Vector, discrepancy, project_input, project_state
from .sampling import bisect_to_level

STRICT_MARGIN = 1e-7
BOUNDARY_TOL = 1e-3


@dataclass(frozen=True)
class CompositeBarrier:
    """Barrier data for the full-order state: reduced barrier, certificate, gains.

    delta bounds the norm of the model discrepancy over the certificate
    sublevel region. With the sigma term omitted the inflation formula has
    no way to budget for discrepancy, so delta must be zero then.
    """

    cbf: ReducedCbf
    cert: SimulationCertificate
    gains: FilterGains
    delta: float = 0.0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.gains.sigma is None and self.delta > 0:
            raise ValueError("sigma omitted requires delta == 0; the inflation "
                             "term cannot absorb a nonzero discrepancy bound")

    @property
    def inflation(self) -> float:
        """Constant c = (sigma delta^2 / 4 + iota / mu) / alpha added to the barrier."""
        sigma_term = 0.0 if self.gains.sigma is None else self.gains.sigma * self.delta ** 2 / 4.0
        return (sigma_term + self.cert.iota / self.gains.mu) / self.gains.alpha


def barrier_b(cb: CompositeBarrier, sys: RomSystem, x: Vector) -> float:
    """B(x) = h(pi(x)) - V(x)/mu; B >= 0 implies the reduced constraint holds."""
    y = project_state(sys, x)
    return cb.cbf.value(y) - cb.cert.value(x) / cb.gains.mu


def barrier_b_delta(cb: CompositeBarrier, sys: RomSystem, x: Vector) -> float:
    """Inflated barrier B(x) + c; its nonnegative set is the certified target."""
    return barrier_b(cb, sys, x) + cb.inflation


def barrier_b_beta(cb: CompositeBarrier, x: Vector) -> float:
    """Sublevel margin beta - V(x); nonnegative iff x is covered by the certificate."""
    return cb.cert.beta - cb.cert.value(x)


def barrier_rates(cb: CompositeBarrier, sys: RomSystem, x: Vector) -> tuple[float, float]:
    """Time derivatives (dB/dt, d(beta - V)/dt) along the closed loop u = k(x).

    Chain rule with analytic gradients where the plant provides them: dB/dt
    combines the reduced barrier gradient with the projected dynamics and
    the certificate decrease rate.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(cb.cert.k(x), dtype=float)
    xdot = sys.fom(x, u)
    y = project_state(sys, x)
    ydot = sys.proj.jacobian(x) @ xdot
    vdot = float(cb.cert.gradient(x) @ xdot)
    b_dot = float(cb.cbf.gradient(y) @ ydot) - vdot / cb.gains.mu
    return b_dot, -vdot


@dataclass(frozen=True)
class GainReport:
    margin: float

    @property
    def passed(self) -> bool:
        return self.margin >= 0.0


def gain_condition(cert: SimulationCertificate, gains: FilterGains) -> GainReport:
    """Compatibility margin lam - alpha - epsilon mu / (4 rho); nonnegative passes."""
    margin = cert.lam - gains.alpha - gains.epsilon * gains.mu / (4.0 * cert.rho)
    return GainReport(margin=margin)


def estimate_delta(cb: CompositeBarrier, sys: RomSystem, n_samples: int = 4096, *,
                   seed: int = 0, safety: float = 1.1) -> float:
    """Sampled bound on ||discrepancy|| over the certificate sublevel region.

    Sobol samples of the domain box are filtered to V <= beta; the maximum
    discrepancy norm under the closed loop, times a safety factor, is the
    estimate. Raises InconclusiveError when no sample lands in the region.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    pts = cb.cert.domain.sample(n_samples, seed=seed)
    worst = -np.inf
    hit = False
    for x in pts:
        if not cb.cert.in_sublevel(x):
            continue
        hit = True
        d = discrepancy(sys, x, np.asarray(cb.cert.k(x), dtype=float), project_input(sys, x))
        worst = max(worst, float(np.linalg.norm(d)))
    if not hit:
        raise InconclusiveError("no sample fell inside the certificate sublevel "
                                "region; cannot bound the discrepancy")
    return safety * worst


@dataclass
class InvarianceReport:
    """Evidence gathered by certify_invariance."""

    gain_margin: float
    delta: float
    c_delta: float
    worst_bdelta_margin: Optional[float]
    worst_bbeta_margin: Optional[float]
    n_boundary_points: int
    status: str  # "pass" | "fail" | "inconclusive" | "inconclusive-empty"

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def as_dict(self) -> dict:
        def opt(v):
            return None if v is None or not np.isfinite(v) else float(v)

        return {
            "gain_margin": float(self.gain_margin),
            "delta": float(self.delta),
            "c_delta": float(self.c_delta),
            "worst_bdelta_margin": opt(self.worst_bdelta_margin),
            "worst_bbeta_margin": opt(self.worst_bbeta_margin),
            "n_boundary_points": self.n_boundary_points,
            "status": self.status,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def _boundary_points(cb: CompositeBarrier, sys: RomSystem, interior: np.ndarray,
                     budget: int, seed: int, tol: float) -> list[np.ndarray]:
    """Points with |B_delta| <= tol or |beta - V| <= tol on the candidate set edge.

    Cast random rays from interior points; the first sign change of either
    face function along a ray is bisected onto the face, and the point is
    kept when the other face function still certifies membership.
    """
    rng = np.random.default_rng(seed)
    dim = sys.fom.state_dim
    faces = (
        (lambda x: barrier_b_delta(cb, sys, x), lambda x: barrier_b_beta(cb, x)),
        (lambda x: barrier_b_beta(cb, x), lambda x: barrier_b_delta(cb, sys, x)),
    )
    found: list[np.ndarray] = []
    tries = 0
    max_tries = 8 * budget
    while len(found) < budget and tries < max_tries:
        x0 = interior[tries % len(interior)]
        face_fn, other_fn = faces[tries % 2]
        tries += 1
        direction = rng.standard_normal(dim)
        direction /= np.linalg.norm(direction)
        t_exit = cb.cert.domain.exit_time(x0, direction)
        if t_exit <= 0:
            continue
        # Coarse march to find a sign change of the face function.
        ts = np.linspace(0.0, min(t_exit, 1e6), 33)
        prev_t, prev_val = 0.0, face_fn(x0)
        bracket = None
        for t in ts[1:]:
            val = face_fn(x0 + t * direction)
            if (val > 0) != (prev_val > 0):
                bracket = (prev_t, t)
                break
            prev_t, prev_val = t, val
        if bracket is None:
            continue
        t_star = bisect_to_level(lambda t: face_fn(x0 + t * direction), *bracket)
        x_star = x0 + t_star * direction
        if abs(face_fn(x_star)) <= tol and other_fn(x_star) >= 0.0:
            found.append(x_star)
    return found


def certify_invariance(cb: CompositeBarrier, sys: RomSystem,
                       boundary_budget: int = 200, *,
                       n_interior: int = 4096, seed: int = 0,
                       tol_b: float = BOUNDARY_TOL,
                       strict_tol: float = STRICT_MARGIN) -> InvarianceReport:
    """Sample the candidate invariant set boundary and check inward derivatives.

    At boundary points the proof obligations are strict inequalities
    dB_inflated/dt > -alpha * B_inflated and d(beta - V)/dt > -lam (beta - V);
    both margins are evaluated at every collected point. Failing the gain
    compatibility condition fails the certificate outright.
    """
    gain = gain_condition(cb.cert, cb.gains)
    base = dict(gain_margin=gain.margin, delta=cb.delta, c_delta=cb.inflation)
    if not gain.passed:
        return InvarianceReport(**base, worst_bdelta_margin=None,
                                worst_bbeta_margin=None, n_boundary_points=0,
                                status="fail")

    pts = cb.cert.domain.sample(n_interior, seed=seed)
    interior = np.array([x for x in pts
                         if barrier_b_delta(cb, sys, x) > tol_b
                         and barrier_b_beta(cb, x) > tol_b])
    if len(interior) == 0:
        return InvarianceReport(**base, worst_bdelta_margin=None,
                                worst_bbeta_margin=None, n_boundary_points=0,
                                status="inconclusive-empty")

    boundary = _boundary_points(cb, sys, interior, boundary_budget, seed + 1, tol_b)
    if not boundary:
        return InvarianceReport(**base, worst_bdelta_margin=None,
                                worst_bbeta_margin=None, n_boundary_points=0,
                                status="inconclusive")

    worst_bd = np.inf
    worst_bb = np.inf
    for x in boundary:
        b_dot, bbeta_dot = barrier_rates(cb, sys, x)
        bd = b_dot + cb.gains.alpha * barrier_b_delta(cb, sys, x)
        bb = bbeta_dot + cb.cert.lam * barrier_b_beta(cb, x)
        worst_bd = min(worst_bd, bd)
        worst_bb = min(worst_bb, bb)

    ok = worst_bd > strict_tol and worst_bb > strict_tol
    return InvarianceReport(**base, worst_bdelta_margin=worst_bd,
                            worst_bbeta_margin=worst_bb,
                            n_boundary_points=len(boundary),
                            status="pass" if ok else "fail")
