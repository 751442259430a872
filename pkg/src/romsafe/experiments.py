"""Experiment pipeline: declarative JSON configs in, artifacts out.

A config names a plant, an obstacle arena, filter gains, a nominal
controller and a certificate source. Running it builds the filtered
reduced controller, constructs or fits the tracking certificate, runs the
gain compatibility check, bounds the model discrepancy, gathers boundary
evidence for invariance, rolls out the closed loop, and writes one CSV
log plus JSON reports per sweep item. Everything is seeded, so re-running
a config reproduces the artifacts byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .barriers import (CompositeBarrier, certify_invariance, estimate_delta,
                       gain_condition)
from .certificates import SimulationCertificate, estimate_constants
from .errors import ConfigError, InconclusiveError, RolloutDiverged
from .filters import (FilterGains, ReducedCbf, circular_obstacle_cbf,
                      make_safety_controller, smooth_combine)
from .plants import (DEFAULT_QUADROTOR_DOMAIN, PLANT_REGISTRY, QuadrotorParams,
                     clocked_double_integrator_system,
                     double_integrator_system, make_quadrotor_interface,
                     quadrotor_candidate_V, quadrotor_system,
                     quat_from_axis_angle, single_integrator_rom)
from .rom import ReducedOrderModel
from .rollout import RolloutConfig, RolloutLog, min_over_rollout, rollout
from .rom import RomSystem, Vector


# ---------------------------------------------------------------------------
# Config schema. Mirrored by configs/schema.json; unknown keys are rejected.

_SWEEPABLE = ("alpha", "epsilon", "mu")


def _require(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return cfg[key]


def _check_keys(cfg: dict, allowed: set[str], where: str) -> None:
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _positive(value, key: str, where: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
        raise ConfigError(f"{where}: '{key}' must be a positive number")
    return float(value)


def _vector(value, length: int, key: str, where: str) -> list[float]:
    if (not isinstance(value, list) or len(value) != length
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise ConfigError(f"{where}: '{key}' must be a list of {length} numbers")
    return [float(v) for v in value]


def validate_config(cfg: dict) -> dict:
    """Validate an experiment config against the published schema."""
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(cfg, {"plant", "plant_params", "obstacles", "smooth_kappa",
                      "gains", "nominal", "certificate", "rollout", "sweep",
                      "certify", "output_dir"}, "config")

    plant = _require(cfg, "plant", "config")
    if plant not in PLANT_REGISTRY:
        raise ConfigError(f"config: unknown plant '{plant}'; "
                          f"known plants: {sorted(PLANT_REGISTRY)}")

    params = cfg.get("plant_params", {})
    if not isinstance(params, dict):
        raise ConfigError("config: 'plant_params' must be an object")
    if plant == "quadrotor":
        _check_keys(params, {"mass", "gravity", "hover_altitude", "k_v", "k_z", "k_R"},
                    "plant_params")
        for key, val in params.items():
            _positive(val, key, "plant_params")
    else:
        _check_keys(params, {"K"}, "plant_params")
        if "K" in params:
            _positive(params["K"], "K", "plant_params")

    obstacles = _require(cfg, "obstacles", "config")
    if not isinstance(obstacles, list) or not obstacles:
        raise ConfigError("config: 'obstacles' must be a nonempty list")
    for i, obs in enumerate(obstacles):
        where = f"obstacles[{i}]"
        if not isinstance(obs, dict):
            raise ConfigError(f"{where}: must be an object")
        _check_keys(obs, {"center", "radius"}, where)
        _vector(_require(obs, "center", where), 2, "center", where)
        _positive(_require(obs, "radius", where), "radius", where)
    if len(obstacles) > 1 and "smooth_kappa" not in cfg:
        raise ConfigError("config: 'smooth_kappa' is required with multiple obstacles")
    if "smooth_kappa" in cfg:
        _positive(cfg["smooth_kappa"], "smooth_kappa", "config")

    gains = _require(cfg, "gains", "config")
    _check_keys(gains, {"alpha", "epsilon", "sigma", "mu"}, "gains")
    for key in ("alpha", "epsilon", "mu"):
        _positive(_require(gains, key, "gains"), key, "gains")
    sigma = gains.get("sigma")
    if sigma is not None and sigma != "omitted":
        _positive(sigma, "sigma", "gains")

    if "nominal" in cfg:
        nominal = cfg["nominal"]
        if not isinstance(nominal, dict):
            raise ConfigError("config: 'nominal' must be an object")
        kind = _require(nominal, "type", "nominal")
        if kind == "goal":
            _check_keys(nominal, {"type", "goal", "gain", "max_speed"}, "nominal")
            _vector(_require(nominal, "goal", "nominal"), 2, "goal", "nominal")
            _positive(_require(nominal, "gain", "nominal"), "gain", "nominal")
            if "max_speed" in nominal:
                _positive(nominal["max_speed"], "max_speed", "nominal")
        elif kind == "constant":
            _check_keys(nominal, {"type", "velocity"}, "nominal")
            _vector(_require(nominal, "velocity", "nominal"), 2, "velocity", "nominal")
        else:
            raise ConfigError(f"nominal: unknown type '{kind}'")

    cert = _require(cfg, "certificate", "config")
    _check_keys(cert, {"source", "beta", "rho", "fit"}, "certificate")
    source = _require(cert, "source", "certificate")
    if source not in ("analytic", "fitted"):
        raise ConfigError("certificate: 'source' must be 'analytic' or 'fitted'")
    if source == "analytic" and cfg["plant"] != "double_integrator":
        raise ConfigError("certificate: no analytic certificate is available "
                          f"for plant '{cfg['plant']}'")
    _positive(_require(cert, "beta", "certificate"), "beta", "certificate")
    if "rho" in cert:
        _positive(cert["rho"], "rho", "certificate")
    fit = cert.get("fit", {})
    _check_keys(fit, {"n_rollouts", "horizon", "dt", "log_stride"}, "certificate.fit")
    for key, val in fit.items():
        _positive(val, key, "certificate.fit")

    roll = _require(cfg, "rollout", "config")
    _check_keys(roll, {"dt", "horizon", "initial_state", "log_stride"}, "rollout")
    _positive(_require(roll, "dt", "rollout"), "dt", "rollout")
    _positive(_require(roll, "horizon", "rollout"), "horizon", "rollout")
    state = _require(roll, "initial_state", "rollout")
    expected = 10 if plant == "quadrotor" else 4
    _vector(state, expected, "initial_state", "rollout")
    stride = roll.get("log_stride", 1)
    if not isinstance(stride, int) or isinstance(stride, bool) or stride < 1:
        raise ConfigError("rollout: 'log_stride' must be a positive integer")

    if "sweep" in cfg:
        sweep = cfg["sweep"]
        _check_keys(sweep, {"parameter", "values"}, "sweep")
        param = _require(sweep, "parameter", "sweep")
        if param not in _SWEEPABLE:
            raise ConfigError(f"sweep: parameter must be one of {_SWEEPABLE}")
        values = _require(sweep, "values", "sweep")
        if not isinstance(values, list):
            raise ConfigError("sweep: 'values' must be a list")
        for v in values:
            _positive(v, "values[]", "sweep")

    if "certify" in cfg:
        certify = cfg["certify"]
        _check_keys(certify, {"boundary_budget", "n_interior", "n_delta_samples"},
                    "certify")
        for key, val in certify.items():
            if not isinstance(val, int) or isinstance(val, bool) or val < 1:
                raise ConfigError(f"certify: '{key}' must be a positive integer")

    if "output_dir" in cfg and not isinstance(cfg["output_dir"], str):
        raise ConfigError("config: 'output_dir' must be a string")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return validate_config(cfg)


# ---------------------------------------------------------------------------
# Builders.

def build_arena_cbf(cfg: dict) -> ReducedCbf:
    cbfs = [circular_obstacle_cbf(obs["center"], obs["radius"])
            for obs in cfg["obstacles"]]
    if len(cbfs) == 1:
        return cbfs[0]
    return smooth_combine(cbfs, cfg["smooth_kappa"])


def build_nominal_controller(nominal: dict) -> Callable[[Vector], Vector]:
    if nominal["type"] == "constant":
        vel = np.asarray(nominal["velocity"], dtype=float)
        return lambda y: vel
    goal = np.asarray(nominal["goal"], dtype=float)
    gain = float(nominal["gain"])
    max_speed = float(nominal.get("max_speed", np.inf))

    def kappa_d(y: Vector) -> Vector:
        v = gain * (goal - np.asarray(y, dtype=float))
        speed = float(np.linalg.norm(v))
        if speed > max_speed:
            v = v * (max_speed / speed)
        return v

    return kappa_d


def build_gains(gains_cfg: dict) -> FilterGains:
    sigma = gains_cfg.get("sigma")
    if sigma == "omitted":
        sigma = None
    return FilterGains(alpha=float(gains_cfg["alpha"]),
                       epsilon=float(gains_cfg["epsilon"]),
                       mu=float(gains_cfg["mu"]),
                       sigma=None if sigma is None else float(sigma))


@dataclasses.dataclass
class ExperimentItem:
    """Everything needed to certify and simulate one sweep item."""

    sys: RomSystem
    cert: SimulationCertificate
    cbf: ReducedCbf
    gains: FilterGains
    kappa: Callable[[Vector], Vector]
    alpha: float


def _collect_states(sys: RomSystem, interface, starts, dt: float, horizon: float,
                    stride: int) -> np.ndarray:
    rows = []
    cfg = None
    for x0 in starts:
        cfg = RolloutConfig(dt=dt, horizon=horizon, initial_state=x0,
                            log_stride=stride)
        log = rollout(sys, interface, None, cfg)
        rows.append(log.x)
    return np.vstack(rows)


def _quadrotor_fit_starts(n: int, params: QuadrotorParams, cbf: ReducedCbf,
                          rng: np.random.Generator) -> list[np.ndarray]:
    """Start states for certificate fitting: level-ish attitude, moderate
    velocity, positions kept clear of the obstacles."""
    starts = []
    while len(starts) < n:
        p_xy = rng.uniform([-0.5, -1.5], [3.5, 1.5])
        if cbf.value(p_xy) < 0.05:
            continue
        axis = rng.standard_normal(3)
        angle = rng.uniform(0.0, 0.12)
        q = quat_from_axis_angle(axis, angle)
        x0 = np.concatenate([
            p_xy, [params.hover_altitude + rng.uniform(-0.15, 0.15)], q,
            rng.uniform(-1.0, 1.0, size=2), [rng.uniform(-0.3, 0.3)]])
        starts.append(x0)
    return starts


def build_item(cfg: dict, gains: FilterGains, seed: int) -> ExperimentItem:
    """Wire one sweep item: arena, filtered controller, plant, certificate."""
    cbf = build_arena_cbf(cfg)
    if "nominal" not in cfg:
        raise ConfigError("config: 'nominal' is required to run an experiment")
    kappa_d = build_nominal_controller(cfg["nominal"])
    cert_cfg = cfg["certificate"]
    plant = cfg["plant"]

    if plant == "double_integrator":
        K = float(cfg.get("plant_params", {}).get("K", 2.0))
        kappa_safe = make_safety_controller(cbf, single_integrator_rom(), gains, kappa_d)
        sys, cert = double_integrator_system(
            K, kappa_safe, rho=float(cert_cfg.get("rho", 1.0)),
            beta=float(cert_cfg["beta"]))
        if cert_cfg["source"] == "fitted":
            fit = cert_cfg.get("fit", {})
            rng = np.random.default_rng(seed + 11)
            starts = []
            for _ in range(int(fit.get("n_rollouts", 8))):
                y0 = rng.uniform([-1.0, -2.0], [3.5, 2.0])
                v0 = kappa_safe(y0) + rng.uniform(-0.8, 0.8, size=2)
                starts.append(np.concatenate([y0, v0]))
            states = _collect_states(sys, cert.k, starts,
                                     dt=float(fit.get("dt", 2e-3)),
                                     horizon=float(fit.get("horizon", 4.0)),
                                     stride=int(fit.get("log_stride", 8)))
            fresh = _collect_states(sys, cert.k, starts[: max(1, len(starts) // 2)],
                                    dt=float(fit.get("dt", 2e-3)) * 1.5,
                                    horizon=float(fit.get("horizon", 4.0)),
                                    stride=int(fit.get("log_stride", 8)))
            rho, lam, iota = estimate_constants(sys, kappa_safe, cert.V, cert.k,
                                                states, fresh, grad_V=cert.grad_V)
            cert = dataclasses.replace(cert, rho=rho, lam=lam, iota=iota)
        return ExperimentItem(sys=sys, cert=cert, cbf=cbf, gains=gains,
                              kappa=kappa_safe, alpha=gains.alpha)

    # Quadrotor: fitted certificate only.
    params = QuadrotorParams(**cfg.get("plant_params", {}))
    sys = quadrotor_system(params)
    kappa_safe = make_safety_controller(cbf, sys.rom, gains, kappa_d)
    interface = make_quadrotor_interface(params, kappa_safe)
    V, grad_V = quadrotor_candidate_V(kappa_safe)

    fit = cert_cfg.get("fit", {})
    rng = np.random.default_rng(seed + 13)
    n_roll = int(fit.get("n_rollouts", 8))
    dt = float(fit.get("dt", 2e-3))
    horizon = float(fit.get("horizon", 6.0))
    stride = int(fit.get("log_stride", 8))
    starts = _quadrotor_fit_starts(n_roll, params, cbf, rng)
    states = _collect_states(sys, interface, starts, dt, horizon, stride)
    fresh_starts = _quadrotor_fit_starts(max(2, n_roll // 2), params, cbf,
                                         np.random.default_rng(seed + 17))
    # The experiment's own start participates in validation so the fitted
    # envelope covers the reported trajectory.
    fresh_starts.append(np.asarray(cfg["rollout"]["initial_state"], dtype=float))
    fresh = _collect_states(sys, interface, fresh_starts, dt,
                            max(horizon, float(cfg["rollout"]["horizon"])), stride)
    rho, lam, iota = estimate_constants(sys, kappa_safe, V, interface,
                                        states, fresh, grad_V=grad_V)
    cert = SimulationCertificate(V=V, k=interface, rho=rho, lam=lam, iota=iota,
                                 beta=float(cert_cfg["beta"]),
                                 domain=DEFAULT_QUADROTOR_DOMAIN, grad_V=grad_V)
    return ExperimentItem(sys=sys, cert=cert, cbf=cbf, gains=gains,
                          kappa=kappa_safe, alpha=gains.alpha)


# ---------------------------------------------------------------------------
# Running items.

def _json_dump(data: dict, path: Path) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def run_item(cfg: dict, gains: FilterGains, item_dir: Path, seed: int, *,
             do_rollout: bool = True) -> dict:
    """Certify (and optionally roll out) one sweep item; writes artifacts."""
    item_dir.mkdir(parents=True, exist_ok=True)
    item = build_item(cfg, gains, seed)
    certify_cfg = cfg.get("certify", {})

    delta: Optional[float]
    try:
        delta = estimate_delta(
            CompositeBarrier(item.cbf, item.cert, item.gains, delta=0.0),
            item.sys, int(certify_cfg.get("n_delta_samples", 2048)), seed=seed + 23)
    except InconclusiveError:
        delta = None

    cb = CompositeBarrier(item.cbf, item.cert, item.gains,
                          delta=0.0 if delta is None else delta)
    report = certify_invariance(cb, item.sys,
                                int(certify_cfg.get("boundary_budget", 200)),
                                n_interior=int(certify_cfg.get("n_interior", 4096)),
                                seed=seed + 29)
    _json_dump(report.as_dict(), item_dir / "certificate.json")
    _json_dump({"source": cfg["certificate"]["source"], "rho": item.cert.rho,
                "lam": item.cert.lam, "iota": item.cert.iota,
                "beta": item.cert.beta}, item_dir / "fit.json")

    summary = {
        "alpha": item.alpha,
        "gain_margin": report.gain_margin,
        "min_h": None,
        "min_B": None,
        "min_Bdelta": None,
        "safe": None,
        "diverged": False,
    }
    if do_rollout:
        roll_cfg = cfg["rollout"]
        rcfg = RolloutConfig(dt=float(roll_cfg["dt"]), horizon=float(roll_cfg["horizon"]),
                             initial_state=np.asarray(roll_cfg["initial_state"], dtype=float),
                             log_stride=int(roll_cfg.get("log_stride", 1)))
        try:
            log = rollout(item.sys, item.cert.k, cb, rcfg, kappa=item.kappa)
        except RolloutDiverged as exc:
            log = exc.log
            summary["diverged"] = True
        if log is not None and len(log):
            log.to_csv(item_dir / "rollout.csv")
            summary["min_h"] = min_over_rollout(log, "h")[1]
            summary["min_B"] = min_over_rollout(log, "B")[1]
            summary["min_Bdelta"] = min_over_rollout(log, "Bdelta")[1]
            summary["safe"] = bool(summary["min_h"] >= 0.0)
    _json_dump(summary, item_dir / "summary.json")
    return summary


def expand_sweep(cfg: dict) -> list[tuple[str, FilterGains]]:
    """Sweep items as (subdirectory name, gains) pairs."""
    base = build_gains(cfg["gains"])
    if "sweep" not in cfg:
        return [("", base)]
    sweep = cfg["sweep"]
    items = []
    for value in sweep["values"]:
        gains = dataclasses.replace(base, **{sweep["parameter"]: float(value)})
        items.append((f"{sweep['parameter']}_{value:g}", gains))
    return items


def run_experiment(config_path, out_dir, seed: int = 0, *,
                   do_rollout: bool = True) -> int:
    """Run every sweep item of a config; returns the process exit code."""
    cfg = load_config(config_path)
    out = Path(out_dir if out_dir is not None else cfg.get("output_dir", "out"))
    items = expand_sweep(cfg)
    if not items:
        return 0
    out.mkdir(parents=True, exist_ok=True)

    def one(entry):
        name, gains = entry
        return run_item(cfg, gains, out / name if name else out, seed,
                        do_rollout=do_rollout)

    if len(items) == 1:
        one(items[0])
    else:
        with ThreadPoolExecutor(max_workers=min(4, len(items))) as pool:
            list(pool.map(one, items))
    return 0


# ---------------------------------------------------------------------------
# Timed-command replay on the tracking proxy.

def load_commands(path) -> np.ndarray:
    """Parse a command file with rows t, vx_desired, vy_desired."""
    rows = []
    try:
        with open(path) as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if line_no == 1 and any(not _is_number(p) for p in parts):
                    continue  # header row
                if len(parts) != 3 or any(not _is_number(p) for p in parts):
                    raise ConfigError(f"{path}:{line_no}: expected "
                                      "'t,vx_desired,vy_desired'")
                rows.append([float(p) for p in parts])
    except OSError as exc:
        raise ConfigError(f"cannot read commands {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: no command rows found")
    arr = np.asarray(rows, dtype=float)
    if np.any(np.diff(arr[:, 0]) < 0):
        raise ConfigError(f"{path}: command times must be nondecreasing")
    return arr


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def run_replay(config_path, commands_path, out_dir, seed: int = 0) -> int:
    """Replay timed velocity commands through the safety filter on the proxy plant."""
    cfg = load_config(config_path)
    if cfg["plant"] != "double_integrator":
        raise ConfigError("replay: the tracking proxy must be 'double_integrator'")
    commands = load_commands(commands_path)
    out = Path(out_dir if out_dir is not None else cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)

    gains = build_gains(cfg["gains"])
    planar_cbf = build_arena_cbf(cfg)

    # Reduced state carries a clock so commands may depend on elapsed time.
    def h(y3: Vector) -> float:
        return planar_cbf.value(y3[0:2])

    def grad_h(y3: Vector) -> Vector:
        g = np.zeros(3)
        g[0:2] = planar_cbf.gradient(y3[0:2])
        return g

    cbf3 = ReducedCbf(h=h, grad_h=grad_h, name=planar_cbf.name)

    times, vx, vy = commands[:, 0], commands[:, 1], commands[:, 2]

    def kappa_d(y3: Vector) -> Vector:
        c = float(y3[2])
        return np.array([np.interp(c, times, vx), np.interp(c, times, vy)])

    roll_cfg = cfg["rollout"]
    horizon = float(roll_cfg["horizon"])
    K = float(cfg.get("plant_params", {}).get("K", 2.0))
    clock_rom = ReducedOrderModel(
        dim=3, input_dim=2, f=lambda y: np.array([0.0, 0.0, 1.0]),
        g=lambda y: np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))
    kappa_safe = make_safety_controller(cbf3, clock_rom, gains, kappa_d)
    sys, cert = clocked_double_integrator_system(
        K, kappa_safe, beta=float(cfg["certificate"]["beta"]), horizon=horizon)

    cb = CompositeBarrier(cbf3, cert, gains, delta=0.0)
    x0 = np.concatenate([np.asarray(roll_cfg["initial_state"], dtype=float), [0.0]])
    rcfg = RolloutConfig(dt=float(roll_cfg["dt"]), horizon=horizon,
                         initial_state=x0, log_stride=int(roll_cfg.get("log_stride", 1)))
    summary = {"alpha": gains.alpha, "gain_margin": gain_condition(cert, gains).margin,
               "min_h": None, "min_B": None, "min_Bdelta": None, "safe": None,
               "diverged": False}
    try:
        log = rollout(sys, cert.k, cb, rcfg, kappa=kappa_safe)
    except RolloutDiverged as exc:
        log = exc.log
        summary["diverged"] = True
    if log is not None and len(log):
        log.to_csv(out / "rollout.csv")
        _write_velocity_csv(log, kappa_safe, out / "velocities.csv")
        summary["min_h"] = min_over_rollout(log, "h")[1]
        summary["min_B"] = min_over_rollout(log, "B")[1]
        summary["min_Bdelta"] = min_over_rollout(log, "Bdelta")[1]
        summary["safe"] = bool(summary["min_h"] >= 0.0)
    _json_dump(summary, out / "summary.json")
    return 0


def _write_velocity_csv(log: RolloutLog, kappa_safe, path: Path) -> None:
    """Commanded versus achieved planar velocities, one row per logged step."""
    with open(path, "w", newline="") as fh:
        fh.write("t,xdot_safe,ydot_safe,xdot,ydot\n")
        for i in range(len(log)):
            cmd = np.asarray(kappa_safe(log.y[i]), dtype=float)
            row = [log.t[i], cmd[0], cmd[1], log.v[i][0], log.v[i][1]]
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
