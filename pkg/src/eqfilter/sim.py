"""Truth simulation, sensor models, experiment runner and Monte Carlo driver.

Every run draws its randomness from three independent streams spawned from
the seed (initial condition, input noise, measurement noise), and every filter
consumes the same realisation, so enabling or disabling a filter never changes
what another filter sees.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import partial
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import EqFilterError
from .filters import EquivariantFilter, LinearKF, SecondOrderEKF, SphereEKF
from .lie_core import cross, so3_exp
from .systems import PolarSystem, SphereSystem, bearing_range

SPHERE_FILTERS = ("eqf", "ekf")
SECOND_ORDER_FILTERS = ("lkf", "ekf", "eqf", "eqf-nocurv")
SPHERE_METRICS = ("bearing_error", "energy")
SECOND_ORDER_METRICS = ("position_error", "velocity_error", "energy")
DEG2RAD = math.pi / 180.0


@dataclass(frozen=True)
class ExperimentConfig:
    """All parameters of one experiment run.

    Noise figures are variances unless ``noise_convention == "std"``, in which
    case they are standard deviations.  Bearing noise is given in degrees.
    ``sigma0_*`` of ``None`` selects the default initial covariance.
    """

    experiment: str = "sphere"
    dt: float = 0.02
    duration: float = 60.0
    seed: int = 0
    filters: Tuple[str, ...] = SPHERE_FILTERS
    curvature: bool = True
    riccati: str = "split"
    noise_convention: str = "variance"
    # direction kinematics
    omega: Tuple[float, float, float] = (0.0, 0.5, -0.2)
    gyro_noise: float = 0.01
    direction_noise: float = 0.1
    initial_direction_noise: float = 10.0
    sigma0_sphere: Optional[float] = None
    # second-order kinematics
    rho0: float = 50.0
    accel_amplitude: float = 1.0
    accel_frequency: float = 5.0
    accel_noise: float = 0.0025
    bearing_noise_deg: float = 4.0
    range_noise: float = 4.0
    initial_noise: float = 0.25
    sigma0_position: Optional[float] = None
    sigma0_velocity: Optional[float] = None

    def __post_init__(self):
        if self.experiment not in ("sphere", "second-order"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if not (self.duration >= self.dt):
            raise ValueError("duration must be at least dt")
        if self.noise_convention not in ("variance", "std"):
            raise ValueError("noise_convention must be 'variance' or 'std'")
        for name in ("gyro_noise", "direction_noise", "initial_direction_noise", "accel_noise",
                     "bearing_noise_deg", "range_noise", "initial_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("sigma0_sphere", "sigma0_position", "sigma0_velocity"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")
        allowed = SPHERE_FILTERS if self.experiment == "sphere" else SECOND_ORDER_FILTERS
        if not self.filters:
            raise ValueError("at least one filter is required")
        for f in self.filters:
            if f not in allowed:
                raise ValueError(f"filter {f!r} not available for {self.experiment}; "
                                 f"choose from {','.join(allowed)}")
        if len(set(self.filters)) != len(self.filters):
            raise ValueError("duplicate filter names")

    @property
    def n_steps(self):
        return int(math.floor(self.duration / self.dt + 1e-9))

    def var(self, value):
        return value * value if self.noise_convention == "std" else value

    @property
    def metrics(self):
        return SPHERE_METRICS if self.experiment == "sphere" else SECOND_ORDER_METRICS


def default_config(experiment, **overrides):
    if experiment == "sphere":
        base = ExperimentConfig(experiment="sphere", duration=60.0, filters=SPHERE_FILTERS)
    elif experiment == "second-order":
        base = ExperimentConfig(experiment="second-order", duration=30.0,
                                filters=SECOND_ORDER_FILTERS)
    else:
        raise ValueError(f"unknown experiment {experiment!r}")
    return replace(base, **overrides)


CONFIG_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def rng_streams(seed):
    """Independent generators for initial condition, inputs and measurements."""
    ss = np.random.SeedSequence(int(seed))
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


@dataclass
class Truth:
    t: np.ndarray          # (n + 1,) time grid including t = 0
    states: np.ndarray     # (n + 1, d)
    inputs: np.ndarray     # (n, q) measured inputs used by the filters
    true_inputs: np.ndarray
    outputs: list          # n dictionaries of measurements, one per step


# -- sensors -------------------------------------------------------------

def sense_sphere(eta, rng, var):
    """``normalize(eta + nu)`` with ``nu ~ N(0, var I3)``."""
    y = eta + rng.normal(scale=math.sqrt(var), size=3)
    return y / np.sqrt(y @ y)


def sense_bearing_range(p, rng, bearing_var, range_var):
    """Bearing rotated by a N(0, bearing_var) angle about a random orthogonal axis.

    ``bearing_var`` is in rad^2.  The range is clipped below at 1e-6.
    """
    b, n = bearing_range(p)
    g = rng.normal(size=3)
    theta = rng.normal(scale=math.sqrt(bearing_var))
    nu = rng.normal(scale=math.sqrt(range_var))
    axis = g - (g @ b) * b
    axis /= np.sqrt(axis @ axis)
    y1 = math.cos(theta) * b + math.sin(theta) * cross(axis, b)
    y1 /= np.sqrt(y1 @ y1)
    return y1, max(n + nu, 1e-6)


# -- truth ---------------------------------------------------------------

def _time_grid(cfg):
    return cfg.dt * np.arange(cfg.n_steps + 1)


def simulate_truth_sphere(cfg, streams=None):
    """Direction kinematics with constant body rate.

    Each step applies the exact rotation ``exp(-dt Omega^x)`` so the state stays
    on the sphere.
    """
    r_init, r_input, r_meas = streams if streams is not None else rng_streams(cfg.seed)
    n = cfg.n_steps
    omega = np.array(cfg.omega, dtype=float)
    mu = r_init.normal(scale=math.sqrt(cfg.var(cfg.initial_direction_noise)), size=3)
    eta = np.array([0.0, 0.0, 1.0]) + mu
    eta /= np.linalg.norm(eta)
    Rstep = so3_exp(-cfg.dt * omega)
    states = np.empty((n + 1, 3))
    states[0] = eta
    gyro_sd = math.sqrt(cfg.var(cfg.gyro_noise))
    meas_var = cfg.var(cfg.direction_noise)
    inputs = np.empty((n, 3))
    outputs = []
    for k in range(n):
        inputs[k] = omega + r_input.normal(scale=gyro_sd, size=3)
        outputs.append({"direction": sense_sphere(states[k], r_meas, meas_var)})
        nxt = Rstep @ states[k]
        states[k + 1] = nxt / np.sqrt(nxt @ nxt)
    return Truth(_time_grid(cfg), states, inputs, np.tile(omega, (n, 1)), outputs)


def acceleration(cfg, t):
    return np.array([0.0, cfg.accel_amplitude * math.cos(cfg.accel_frequency * t), 0.0])


def initial_position(cfg, rng):
    """Position of the polar chart point ``mu ~ N(0, initial_noise I6)``."""
    system = PolarSystem(cfg.rho0)
    mu = rng.normal(scale=math.sqrt(cfg.var(cfg.initial_noise)), size=6)
    return system.chart_inv(mu)[:3]


def simulate_truth_secondorder(cfg, streams=None):
    """Euler-integrated ``p' = v, v' = a`` with noisy accelerometer and bearing/range."""
    r_init, r_input, r_meas = streams if streams is not None else rng_streams(cfg.seed)
    n = cfg.n_steps
    dt = cfg.dt
    states = np.empty((n + 1, 6))
    states[0, :3] = initial_position(cfg, r_init)
    states[0, 3:] = 0.0
    acc_sd = math.sqrt(cfg.var(cfg.accel_noise))
    bvar = cfg.var(cfg.bearing_noise_deg) * DEG2RAD ** 2
    rvar = cfg.var(cfg.range_noise)
    inputs = np.zeros((n, 6))
    true_inputs = np.zeros((n, 6))
    outputs = []
    for k in range(n):
        a = acceleration(cfg, k * dt)
        true_inputs[k, 3:] = a
        inputs[k, 3:] = a + r_input.normal(scale=acc_sd, size=3)
        p, v = states[k, :3], states[k, 3:]
        y1, y2 = sense_bearing_range(p, r_meas, bvar, rvar)
        outputs.append({"bearing": y1, "range": np.array([y2])})
        states[k + 1, :3] = p + dt * v
        states[k + 1, 3:] = v + dt * a
    return Truth(_time_grid(cfg), states, inputs, true_inputs, outputs)


def simulate_truth(cfg, streams=None):
    if cfg.experiment == "sphere":
        return simulate_truth_sphere(cfg, streams)
    return simulate_truth_secondorder(cfg, streams)


# -- filters -------------------------------------------------------------

def default_sigma0(cfg):
    """Initial covariances matched to the spread of the initial error."""
    if cfg.experiment == "sphere":
        s = cfg.sigma0_sphere
        if s is None:
            s = min(cfg.var(cfg.initial_direction_noise), math.pi ** 2 / 4.0)
        return {"chart": s * np.eye(2), "euclidean": s * np.eye(2)}
    pos = cfg.var(cfg.initial_noise) if cfg.sigma0_position is None else cfg.sigma0_position
    vel = 1.0 if cfg.sigma0_velocity is None else cfg.sigma0_velocity
    chart = np.diag([pos] * 3 + [vel] * 3)
    # the same spread expressed in metres around the origin position
    euclid = np.diag([pos * cfg.rho0 ** 2] * 3 + [vel] * 3)
    return {"chart": chart, "euclidean": euclid}


def build_filters(cfg):
    """Filter objects keyed by name, in the order given by ``cfg.filters``."""
    dt = cfg.dt
    s0 = default_sigma0(cfg)
    out = {}
    if cfg.experiment == "sphere":
        system = SphereSystem()
        gyro = cfg.var(cfg.gyro_noise)
        meas = cfg.var(cfg.direction_noise)
        for name in cfg.filters:
            if name == "eqf":
                out[name] = EquivariantFilter(system, s0["chart"], dt * gyro * np.eye(3),
                                              dt * meas * np.eye(2), curvature=cfg.curvature,
                                              riccati=cfg.riccati)
            elif name == "ekf":
                out[name] = SphereEKF(s0["euclidean"], meas, gyro)
        return out

    system = PolarSystem(cfg.rho0)
    acc = cfg.var(cfg.accel_noise)
    bvar = cfg.var(cfg.bearing_noise_deg) * DEG2RAD ** 2
    rvar = cfg.var(cfg.range_noise)
    M = dt * np.diag([0.0] * 3 + [acc] * 3)

    def output_cov(sys_, X):
        rng_hat = float(np.linalg.norm(sys_.phi(X, sys_.origin)[:3]))
        return dt * np.diag([0.5 * bvar, 0.5 * bvar, rvar / rng_hat ** 2])

    x0 = system.origin.copy()
    for name in cfg.filters:
        if name in ("eqf", "eqf-nocurv"):
            curv = cfg.curvature if name == "eqf" else False
            out[name] = EquivariantFilter(system, s0["chart"], M, output_cov,
                                          curvature=curv, riccati=cfg.riccati)
        elif name == "ekf":
            out[name] = SecondOrderEKF(s0["euclidean"], bvar, rvar, acc, x0)
        elif name == "lkf":
            out[name] = LinearKF(s0["euclidean"], bvar, rvar, acc, x0)
    return out


# -- runs ----------------------------------------------------------------

@dataclass
class RunLog:
    """Per-step record of one run, logged after each filter step."""

    config: ExperimentConfig
    t: np.ndarray
    truth: np.ndarray
    estimates: Dict[str, np.ndarray] = field(default_factory=dict)
    metrics: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)
    covariances: Dict[str, np.ndarray] = field(default_factory=dict)


class FilterFailure(EqFilterError):
    """A filter raised during a run; carries the filter name and step index."""

    def __init__(self, filter_name, step, cause):
        super().__init__(f"filter {filter_name!r} failed at step {step}: {cause}")
        self.filter_name = filter_name
        self.step = step
        self.cause = cause


def bearing_error(eta_hat, eta):
    return float(abs(math.acos(max(-1.0, min(1.0, float(eta_hat @ eta))))))


def run_experiment(cfg, keep_covariances=False):
    """Run every selected filter on one shared truth/noise realisation."""
    truth = simulate_truth(cfg)
    filters = build_filters(cfg)
    n = cfg.n_steps
    log = RunLog(cfg, truth.t[1:].copy(), truth.states[1:].copy())
    for name, filt in filters.items():
        state = filt.initial_state()
        est = np.empty_like(log.truth)
        energy = np.empty(n)
        covs = np.empty((n,) + state.Sigma.shape) if keep_covariances else None
        for k in range(n):
            try:
                state = filt.step(state, truth.inputs[k], truth.outputs[k], cfg.dt, step=k)
                xi = truth.states[k + 1]
                est[k] = filt.estimate(state)
                energy[k] = filt.energy(state, xi)
            except EqFilterError as exc:
                raise FilterFailure(name, k, exc) from exc
            if covs is not None:
                covs[k] = state.Sigma
        log.estimates[name] = est
        if cfg.experiment == "sphere":
            err = np.array([bearing_error(est[k], log.truth[k]) for k in range(n)])
            log.metrics[name] = {"bearing_error": err, "energy": energy}
        else:
            log.metrics[name] = {
                "position_error": np.linalg.norm(est[:, :3] - log.truth[:, :3], axis=1),
                "velocity_error": np.linalg.norm(est[:, 3:] - log.truth[:, 3:], axis=1),
                "energy": energy,
            }
        if covs is not None:
            log.covariances[name] = covs
    return log


# -- Monte Carlo ---------------------------------------------------------

@dataclass
class Aggregate:
    """Statistics over seeds.

    ``series[filter][metric]`` holds per-step (q25, median, q75) arrays.
    ``summary[filter][metric][window]`` holds the (q25, median, q75) of the
    per-seed time-average over ``window`` (``"steady"`` is the final quarter,
    ``"transient"`` the first 5 s, ``"full"`` the whole run).
    """

    config: ExperimentConfig
    seeds: Tuple[int, ...]
    t: np.ndarray
    series: Dict[str, Dict[str, np.ndarray]]
    summary: Dict[str, Dict[str, Dict[str, np.ndarray]]]
    per_seed: Dict[str, Dict[str, Dict[str, np.ndarray]]]


TRANSIENT_WINDOW = 5.0


def window_masks(t, dt, duration):
    n = t.size
    steady_start = n - max(1, int(round(0.25 * n)))
    steady = np.zeros(n, dtype=bool)
    steady[steady_start:] = True
    transient = t <= TRANSIENT_WINDOW + 1e-9
    if not transient.any():
        transient[0] = True
    return {"steady": steady, "transient": transient, "full": np.ones(n, dtype=bool)}


def aggregate(logs):
    """Reduce a list of run logs (one per seed) to quantile statistics."""
    if not logs:
        raise ValueError("no runs to aggregate")
    order = sorted(range(len(logs)), key=lambda i: logs[i].config.seed)
    logs = [logs[i] for i in order]
    cfg0 = logs[0].config
    t = logs[0].t
    masks = window_masks(t, cfg0.dt, cfg0.duration)
    series, summary, per_seed = {}, {}, {}
    for name in cfg0.filters:
        series[name], summary[name], per_seed[name] = {}, {}, {}
        for metric in cfg0.metrics:
            stack = np.vstack([lg.metrics[name][metric] for lg in logs])
            series[name][metric] = np.percentile(stack, [25, 50, 75], axis=0)
            summary[name][metric] = {}
            per_seed[name][metric] = {}
            for w, m in masks.items():
                vals = stack[:, m].mean(axis=1)
                per_seed[name][metric][w] = vals
                summary[name][metric][w] = np.percentile(vals, [25, 50, 75])
    return Aggregate(cfg0, tuple(lg.config.seed for lg in logs), t, series, summary, per_seed)


def monte_carlo(cfg, n_seeds, workers=1, seeds=None, keep_covariances=False):
    """Run ``n_seeds`` independent seeds starting at ``cfg.seed``.

    Results are ordered by seed whatever the worker count, so the aggregate is
    independent of scheduling.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    if seeds is None:
        seeds = [cfg.seed + i for i in range(n_seeds)]
    cfgs = [replace(cfg, seed=s) for s in seeds]
    run = partial(run_experiment, keep_covariances=keep_covariances)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(run, cfgs))
    else:
        logs = [run(c) for c in cfgs]
    return logs, aggregate(logs)
