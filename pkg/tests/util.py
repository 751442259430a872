"""Shared oracles and samplers for the test suite.

The oracles here are intentionally independent of the code paths they
check: enumeration, hand algebra, and finite differences only.
"""

import numpy as np

from romsafe import RolloutConfig, rollout
from romsafe.plants import quat_from_axis_angle


def halfspace_projection_oracle(a, b, kappa_d, span=6.0, step=1e-3):
    """Projection of kappa_d onto {v : a.v >= b} by dense enumeration.

    Candidates are kappa_d itself (when feasible) and a dense sweep of the
    constraint boundary, parameterized by whichever coordinate keeps the
    line well conditioned. No projection formula is used.
    """
    a = np.asarray(a, dtype=float)
    kappa_d = np.asarray(kappa_d, dtype=float)
    candidates = []
    if float(a @ kappa_d) >= b:
        candidates.append(kappa_d)
    s = np.arange(-span, span + step, step)
    if abs(a[1]) >= abs(a[0]):
        pts = np.column_stack([s, (b - a[0] * s) / a[1]])
    else:
        pts = np.column_stack([(b - a[1] * s) / a[0], s])
    d_sq = np.sum((pts - kappa_d) ** 2, axis=1)
    candidates.append(pts[int(np.argmin(d_sq))])
    return min(candidates, key=lambda v: float((v - kappa_d) @ (v - kappa_d)))


def feasible_grid_points(a, b, lo, hi, step):
    """All grid points of [lo, hi]^2 satisfying a.v >= b."""
    axis = np.arange(lo, hi + step / 2, step)
    g0, g1 = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([g0.ravel(), g1.ravel()])
    return pts[pts @ np.asarray(a, dtype=float) >= b]


def dense_grid_argmin(a, b, kappa_d, lo, hi, step, chunk=2_000_000):
    """Argmin of ||v - kappa_d|| over feasible grid points, chunked to
    bound memory; returns None if no grid point is feasible."""
    a = np.asarray(a, dtype=float)
    kappa_d = np.asarray(kappa_d, dtype=float)
    axis = np.arange(lo, hi + step / 2, step)
    best, best_d = None, np.inf
    rows_per_chunk = max(1, chunk // axis.size)
    for start in range(0, axis.size, rows_per_chunk):
        rows = axis[start:start + rows_per_chunk]
        g0, g1 = np.meshgrid(rows, axis, indexing="ij")
        pts = np.column_stack([g0.ravel(), g1.ravel()])
        mask = pts @ a >= b
        if not np.any(mask):
            continue
        pts = pts[mask]
        d_sq = np.sum((pts - kappa_d) ** 2, axis=1)
        i = int(np.argmin(d_sq))
        if d_sq[i] < best_d:
            best, best_d = pts[i], d_sq[i]
    return best


def empirical_lipschitz(f, box, n_pairs, seed, spread=1e-3):
    """Largest finite-difference slope of f over random nearby pairs in a box."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        x = rng.uniform(box.lo, box.hi)
        d = rng.standard_normal(box.dim)
        d *= spread / np.linalg.norm(d)
        fx = np.atleast_1d(np.asarray(f(x), dtype=float))
        fy = np.atleast_1d(np.asarray(f(x + d), dtype=float))
        worst = max(worst, float(np.linalg.norm(fy - fx)) / spread)
    return worst


def quadrotor_random_start(rng, params, cbf, *, p_lo=(-0.3, -1.2), p_hi=(3.2, 1.2),
                           v_range=0.8, vz_range=0.2, tilt=0.1, clearance=0.1):
    """Random level-ish quadrotor start clear of the obstacles."""
    while True:
        p_xy = rng.uniform(p_lo, p_hi)
        if cbf.value(p_xy) < clearance:
            continue
        q = quat_from_axis_angle(rng.standard_normal(3), rng.uniform(0.0, tilt))
        return np.concatenate([
            p_xy, [params.hover_altitude + rng.uniform(-0.1, 0.1)], q,
            rng.uniform(-v_range, v_range, 2), [rng.uniform(-vz_range, vz_range)]])


def lifted_grid_starts(cbf, cert, gains, kappa, *, nx=10, ny=10,
                       x_range=(-0.5, 3.2), y_range=(-1.6, 1.6), seed=42):
    """Grid the reduced plane and lift into the certified set: v is the
    commanded velocity plus a perturbation small enough that both barrier
    memberships hold strictly."""
    rng = np.random.default_rng(seed)
    starts = []
    for gx in np.linspace(*x_range, nx):
        for gy in np.linspace(*y_range, ny):
            y = np.array([gx, gy])
            h = cbf.value(y)
            if h <= 0.01:
                continue
            cap = 0.45 * min(cert.beta, gains.mu * h)
            d = rng.standard_normal(2)
            d /= np.linalg.norm(d)
            pert = d * np.sqrt(cap / cert.rho) * rng.uniform(0.2, 1.0)
            starts.append(np.concatenate([y, np.asarray(kappa(y)) + pert]))
    return starts


def closed_loop_states(sys, interface, starts, dt, horizon, stride):
    rows = [rollout(sys, interface, None,
                    RolloutConfig(dt=dt, horizon=horizon, initial_state=x0,
                                  log_stride=stride)).x
            for x0 in starts]
    return np.vstack(rows)
