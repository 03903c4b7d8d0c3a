"""
Quadrotor model and the two UAV attack scenarios.

State layout: [p_x, v_x, th_x, dth_x, p_y, v_y, th_y, dth_y, p_z, v_z]
Input layout: [th_ref_x, th_ref_y, thrust]

mitm       the plant is controlled with its true state; an eavesdropper
           corrupts the reported measurements and the receiver estimates the
           path (ramp on x-position plus roving noise)
gps_spoof  the vehicle controls itself from its own estimate, so a spoofed
           GPS bends the flown path (sinusoid on x-position plus roving noise)
"""

import logging
from dataclasses import dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline
from scipy.linalg import expm

from secest.core.conditions import max_correctable
from secest.core.design import DesignReport, design_secure_feedback, lqr_gain
from secest.core.errors import InvalidExperiment
from secest.core.kalman import FILTER_METHODS, CombinedEstimator, KalmanFilter, run_filters
from secest.core.model import AttackPolicy, LtiSystem, generate_attacks
from secest.utils import save_json_file

logger = logging.getLogger(__name__)

STATE_NAMES = ("p_x", "v_x", "th_x", "dth_x", "p_y", "v_y", "th_y", "dth_y", "p_z", "v_z")
POSITION_INDEX = {"x": 0, "y": 4, "z": 8}
# extra rows appended to the three GPS rows, in order
IMU_ROWS = (1, 5, 9, 2, 6)
ANGLE_STATES = (2, 3, 6, 7)
DEFAULT_WAYPOINTS = (
    (0.0, 0.0, 0.0),
    (2.0, 1.0, 1.0),
    (4.0, 3.0, 2.0),
    (6.0, 2.0, 2.5),
    (8.0, 0.0, 2.0),
)


@dataclass(frozen=True)
class QuadrotorParams:
    ts: float = 0.05
    g: float = 9.81
    mass: float = 0.65
    k_t: float = 0.91
    rot_nat_freq: float = 9.0
    rot_damping: float = 0.85

    def __post_init__(self):
        if self.ts <= 0:
            raise InvalidExperiment(f"Sampling time must be positive, got {self.ts}")
        if self.mass <= 0:
            raise InvalidExperiment(f"Mass must be positive, got {self.mass}")
        if self.rot_nat_freq < 0 or self.rot_damping < 0:
            raise InvalidExperiment("Rotational dynamics must be stable or marginally stable")

    @classmethod
    def from_config(cls, uav_config: Dict[str, Any]) -> "QuadrotorParams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: float(v) for k, v in uav_config.items() if k in names})


def rotational_block(params: QuadrotorParams) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization of th'' = w^2 (th_ref - th) - 2 z w th'."""
    w, z = params.rot_nat_freq, params.rot_damping
    a_c = np.array([[0.0, 1.0], [-w ** 2, -2.0 * z * w]])
    b_c = np.array([[0.0], [w ** 2]])
    augmented = np.zeros((3, 3))
    augmented[:2, :2] = a_c
    augmented[:2, 2:] = b_c
    discrete = expm(augmented * params.ts)
    return discrete[:2, :2], discrete[:2, 2]


def measurement_matrix(n_y: int, extra_rows: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    GPS position rows (p_x, p_y, p_z) followed by n_y - 3 state rows:
    velocities first, then attitude, unless ``extra_rows`` names them.
    """
    if n_y < 3:
        raise InvalidExperiment(f"At least the three GPS rows are needed, got n_y={n_y}")
    rows = list(extra_rows) if extra_rows is not None else list(IMU_ROWS[:n_y - 3])
    if len(rows) != n_y - 3 or any(r < 0 or r >= len(STATE_NAMES) for r in rows):
        raise InvalidExperiment(f"Extra rows {rows} do not fit n_y={n_y}")
    picked = [POSITION_INDEX["x"], POSITION_INDEX["y"], POSITION_INDEX["z"]] + rows
    if len(set(picked)) != len(picked):
        raise InvalidExperiment(f"Measurement rows repeat a state: {picked}")
    C = np.zeros((n_y, len(STATE_NAMES)))
    C[np.arange(n_y), picked] = 1.0
    return C


def build_quadrotor(params: QuadrotorParams, n_y: int = 3,
                    extra_rows: Optional[Sequence[int]] = None) -> LtiSystem:
    """Linearized hover model with x/y position-velocity-attitude chains and a z chain."""
    ts, g = params.ts, params.g
    a_th, b_th = rotational_block(params)
    A = np.eye(10)
    B = np.zeros((10, 3))
    for base, col in ((0, 0), (4, 1)):
        A[base, base + 1] = ts
        A[base, base + 2] = g * ts ** 2 / 2
        A[base + 1, base + 2] = g * ts
        A[base + 2:base + 4, base + 2:base + 4] = a_th
        B[base + 2:base + 4, col] = b_th
    A[8, 9] = ts
    B[8, 2] = params.k_t * ts ** 2 / (2 * params.mass)
    B[9, 2] = params.k_t * ts / params.mass
    return LtiSystem(a_open=A, b=B, c=measurement_matrix(n_y, extra_rows))


def noise_covariances(C: np.ndarray, proc_std: float, pos_vel_std: float,
                      angle_std: float) -> Tuple[np.ndarray, np.ndarray]:
    sensed = np.argmax(C, axis=1)
    stds = np.array([angle_std if s in ANGLE_STATES else pos_vel_std for s in sensed])
    return proc_std ** 2 * np.eye(C.shape[1]), np.diag(stds ** 2)


def desired_path(steps: int, ts: float, waypoints: Optional[Sequence[Sequence[float]]] = None) -> np.ndarray:
    """
    Reference states x_r(t) from a clamped cubic spline through 3-D
    waypoints spread evenly over the run; attitude references are zero.
    """
    points = np.asarray(waypoints if waypoints is not None else DEFAULT_WAYPOINTS, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] < 2:
        raise InvalidExperiment(f"Waypoints must be a list of at least two 3-D points, got shape {points.shape}")
    duration = max(steps - 1, 1) * ts
    knots = np.linspace(0.0, duration, points.shape[0])
    spline = CubicSpline(knots, points, bc_type="clamped")
    times = np.arange(steps) * ts
    pos, vel = spline(times), spline(times, 1)
    path = np.zeros((steps, len(STATE_NAMES)))
    for axis, col in enumerate(("x", "y", "z")):
        path[:, POSITION_INDEX[col]] = pos[:, axis]
        path[:, POSITION_INDEX[col] + 1] = vel[:, axis]
    return path


@dataclass
class UavScenarioConfig:
    params: QuadrotorParams = field(default_factory=QuadrotorParams)
    steps: int = 200
    n_y: int = 5
    extra_rows: Optional[Tuple[int, ...]] = None
    window: Optional[int] = 10
    methods: Tuple[str, ...] = FILTER_METHODS
    proc_std: float = 0.01
    pos_vel_std: float = 0.05
    angle_std: float = 0.01
    attack: bool = True
    ramp_slope: float = 0.1
    sinusoid_amplitude: float = 5.0
    sinusoid_period: float = 100.0
    roving_std: float = 1.0
    waypoints: Optional[Tuple[Tuple[float, float, float], ...]] = None
    max_shift: float = 0.1
    max_pole: float = 0.8
    design_iterations: int = 200
    q_scale: float = 1.0
    r_scale: float = 1.0
    p0_scale: float = 10.0
    r_inflation: float = 1.0
    compare_lqr: bool = True
    decoder_method: str = "qr"
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.methods) - set(FILTER_METHODS)
        if unknown:
            raise InvalidExperiment(f"Unknown estimator methods {sorted(unknown)}")
        if self.steps < 2:
            raise InvalidExperiment("A scenario needs at least two steps")
        if self.window is not None and self.window < 1:
            raise InvalidExperiment(f"Window must be positive, got {self.window}")
        if not 0.0 < self.max_pole < 1.0:
            raise InvalidExperiment(f"max_pole must lie in (0, 1), got {self.max_pole}")

    @classmethod
    def from_config(cls, config: Dict[str, Any], **overrides) -> "UavScenarioConfig":
        uav = config.get("uav", {})
        attacks = config.get("attacks", {})
        design = config.get("design", {})
        kalman = config.get("kalman", {})
        waypoints = uav.get("waypoints")
        values = dict(
            params=QuadrotorParams.from_config(uav),
            steps=int(uav.get("steps", 200)),
            n_y=int(uav.get("n_y", 5)),
            window=uav.get("window", 10),
            methods=tuple(uav.get("methods", FILTER_METHODS)),
            proc_std=float(uav.get("proc_std", 0.01)),
            pos_vel_std=float(uav.get("pos_vel_std", 0.05)),
            angle_std=float(uav.get("angle_std", 0.01)),
            ramp_slope=float(attacks.get("ramp_slope", 0.1)),
            sinusoid_amplitude=float(attacks.get("sinusoid_amplitude", 5.0)),
            sinusoid_period=float(attacks.get("sinusoid_period", 100)),
            roving_std=float(attacks.get("roving_std", 1.0)),
            waypoints=tuple(tuple(w) for w in waypoints) if waypoints else None,
            max_shift=float(design.get("max_shift", 0.1)),
            max_pole=float(uav.get("max_pole", 0.8)),
            design_iterations=int(design.get("iterations", 200)),
            q_scale=float(design.get("q_scale", 1.0)),
            r_scale=float(design.get("r_scale", 1.0)),
            p0_scale=float(kalman.get("p0_scale", 10.0)),
            r_inflation=float(kalman.get("r_inflation", 1.0)),
            decoder_method=config.get("decoder", {}).get("method", "qr"),
            seed=int(config.get("execution", {}).get("seed", 0)),
        )
        values.update(overrides)
        return cls(**values)


@dataclass
class ScenarioResult:
    """
    Per-step arrays share the leading dimension ``steps``. In the MITM
    scenario every method sees the same true path.
    """

    scenario: str
    n_y: int
    window: int
    desired_path: np.ndarray
    true_paths: Dict[str, np.ndarray]
    estimates: Dict[str, np.ndarray]
    attacks: np.ndarray
    attack_estimates: Dict[str, np.ndarray]
    rmse: Dict[str, Dict[str, float]]
    tracking_rmse: Dict[str, Dict[str, float]]
    design: Optional[DesignReport] = None
    attack_error: Dict[str, float] = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.desired_path.shape[0]

    def summary(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "n_y": self.n_y,
            "window": self.window,
            "steps": self.steps,
            "methods": sorted(self.estimates),
            "rmse": self.rmse,
            "tracking_rmse": self.tracking_rmse,
            "attack_error": self.attack_error,
            "q_max": self.design.q_max if self.design else None,
            "design": self.design.to_dict() if self.design else None,
        }

    def to_frame(self, method: str) -> pd.DataFrame:
        """Per-step table for one method: desired, true and estimated positions plus attacks."""
        data: Dict[str, Any] = {"t": np.arange(self.steps)}
        for axis, idx in POSITION_INDEX.items():
            data[f"desired_{axis}"] = self.desired_path[:, idx]
            data[f"true_{axis}"] = self.true_paths[method][:, idx]
            data[f"est_{axis}"] = self.estimates[method][:, idx]
        for i in range(self.attacks.shape[1]):
            data[f"e_{i + 1}"] = self.attacks[:, i]
            if method in self.attack_estimates:
                data[f"e_hat_{i + 1}"] = self.attack_estimates[method][:, i]
        return pd.DataFrame(data)

    def export(self, output_dir: str) -> List[str]:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        summary_path = str(out / f"{self.scenario}_ny{self.n_y}_summary.json")
        save_json_file(self.summary(), summary_path)
        written = [summary_path]
        for method in sorted(self.estimates):
            path = out / f"{self.scenario}_ny{self.n_y}_{method.replace('+', '_')}.csv"
            self.to_frame(method).to_csv(path, index=False)
            written.append(str(path))
        logger.info(f"Exported {len(written)} files to {out}")
        return written


def _axis_rmse(error: np.ndarray, start: int) -> Dict[str, float]:
    tail = error[start:]
    return {axis: float(np.sqrt(np.mean(tail[:, idx] ** 2))) for axis, idx in POSITION_INDEX.items()}


def _cost_weights(cfg: UavScenarioConfig, sys: LtiSystem) -> Tuple[np.ndarray, np.ndarray]:
    return cfg.q_scale * np.eye(sys.n), cfg.r_scale * np.eye(sys.m)


@lru_cache(maxsize=32)
def _cached_design(params: QuadrotorParams, n_y: int, extra_rows: Optional[Tuple[int, ...]],
                   max_shift: float, max_pole: float, iterations: int,
                   q_scale: float, r_scale: float) -> DesignReport:
    sys = build_quadrotor(params, n_y, extra_rows)
    return design_secure_feedback(sys.a_open, sys.b, sys.c,
                                  q_scale * np.eye(sys.n), r_scale * np.eye(sys.m),
                                  max_shift=max_shift, iterations=iterations, max_pole=max_pole)


def secure_design(cfg: UavScenarioConfig) -> DesignReport:
    """Decoder-aware feedback for the configured measurement set (memoized)."""
    extra = tuple(cfg.extra_rows) if cfg.extra_rows is not None else None
    return _cached_design(cfg.params, cfg.n_y, extra, cfg.max_shift, cfg.max_pole,
                          cfg.design_iterations, cfg.q_scale, cfg.r_scale)


def _window_for(cfg: UavScenarioConfig, report: DesignReport) -> int:
    if cfg.window is not None:
        return int(cfg.window)
    if report.t_bound is None:
        raise InvalidExperiment("No window bound for this design; set an explicit window")
    return int(report.t_bound.t_recommended)


def _scenario_attacks(cfg: UavScenarioConfig, p: int, sinusoid: bool,
                      rng: np.random.Generator) -> np.ndarray:
    if not cfg.attack:
        return np.zeros((cfg.steps, p))
    # only position measurements are corrupted: x carries the signal, y/z the roving noise
    params = {"target": 0, "roving_std": cfg.roving_std, "roving_candidates": [1, 2]}
    if sinusoid:
        params.update(amplitude=cfg.sinusoid_amplitude, period=cfg.sinusoid_period)
        policy = AttackPolicy.SINUSOID_PLUS_ROVING_NOISE
    else:
        params.update(slope=cfg.ramp_slope)
        policy = AttackPolicy.RAMP_PLUS_ROVING_NOISE
    return generate_attacks(policy, p, cfg.steps, params, rng=rng).vectors.copy()


def _noise(sys: LtiSystem, steps: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    w = rng.multivariate_normal(np.zeros(sys.n), sys.proc_noise_cov, size=steps)
    v = rng.multivariate_normal(np.zeros(sys.p), sys.meas_noise_cov, size=steps)
    return w, v


def _plant_with_noise(cfg: UavScenarioConfig, G: np.ndarray) -> LtiSystem:
    base = build_quadrotor(cfg.params, cfg.n_y, cfg.extra_rows)
    q, r = noise_covariances(base.c, cfg.proc_std, cfg.pos_vel_std, cfg.angle_std)
    return LtiSystem(base.a_open, base.b, base.c, G, q, r)


def _true_state_run(sys: LtiSystem, x_ref: np.ndarray, attacks: np.ndarray,
                    w: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed loop u = G (x - x_r) on the true state; returns states, reported outputs, known inputs."""
    steps = x_ref.shape[0]
    states = np.zeros((steps, sys.n))
    outputs = np.zeros((steps, sys.p))
    known = -(sys.g @ x_ref.T).T
    x = x_ref[0].copy()
    for t in range(steps):
        states[t] = x
        outputs[t] = sys.c @ x + attacks[t] + v[t]
        x = sys.a_closed @ x + sys.b @ known[t] + w[t]
    return states, outputs, known


def _attack_error(sys: LtiSystem, cfg: UavScenarioConfig, window: int, x_ref: np.ndarray,
                  attacks: np.ndarray, w: np.ndarray, v: np.ndarray) -> float:
    _, outputs, known = _true_state_run(sys, x_ref, attacks, w, v)
    est = run_filters(sys, outputs, known, window, methods=("se",), known_inputs=known,
                      decoder_method=cfg.decoder_method, p0_scale=cfg.p0_scale,
                      r_inflation=cfg.r_inflation)
    diff = est["e_hat"][window:] - attacks[window:]
    return float(np.mean(np.linalg.norm(diff, axis=1)))


def run_mitm(cfg: UavScenarioConfig) -> ScenarioResult:
    """
    Receiver-side path reconstruction under a man-in-the-middle attack.

    The vehicle flies with its true state, so its path does not depend on the
    estimator; each method reconstructs it from the corrupted reports. With
    ``compare_lqr`` the secure decoder is also run on the plain LQR loop and
    the mean attack-estimation error of both feedbacks is reported.
    """
    report = secure_design(cfg)
    window = _window_for(cfg, report)
    sys = _plant_with_noise(cfg, report.gain)
    rng = np.random.default_rng(cfg.seed)
    x_ref = desired_path(cfg.steps, cfg.params.ts, cfg.waypoints)
    attacks = _scenario_attacks(cfg, sys.p, sinusoid=False, rng=rng)
    w, v = _noise(sys, cfg.steps, rng)

    states, outputs, known = _true_state_run(sys, x_ref, attacks, w, v)
    est = run_filters(sys, outputs, known, window, methods=cfg.methods, known_inputs=known,
                      decoder_method=cfg.decoder_method, p0_scale=cfg.p0_scale,
                      r_inflation=cfg.r_inflation)

    estimates = {m: est[m] for m in cfg.methods}
    attack_estimates = {m: est["e_hat"] for m in cfg.methods if m != "kf"}
    attack_error: Dict[str, float] = {}
    if cfg.compare_lqr:
        Q, R = _cost_weights(cfg, sys)
        lqr_sys = sys.with_feedback(lqr_gain(sys.a_open, sys.b, Q, R))
        attack_error["lqr"] = _attack_error(lqr_sys, cfg, window, x_ref, attacks, w, v)
        attack_error["secure"] = _attack_error(sys, cfg, window, x_ref, attacks, w, v)
        logger.info(f"Attack estimation error: LQR {attack_error['lqr']:.4f}, "
                    f"secure design {attack_error['secure']:.4f}")

    result = ScenarioResult(
        scenario="mitm",
        n_y=cfg.n_y,
        window=window,
        desired_path=x_ref,
        true_paths={m: states for m in cfg.methods},
        estimates=estimates,
        attacks=attacks,
        attack_estimates=attack_estimates,
        rmse={m: _axis_rmse(estimates[m] - states, window) for m in cfg.methods},
        tracking_rmse={m: _axis_rmse(states - x_ref, window) for m in cfg.methods},
        design=report,
        attack_error=attack_error,
    )
    logger.info(f"MITM (n_y={cfg.n_y}, T={window}) x-axis RMSE: "
                + ", ".join(f"{m} {result.rmse[m]['x']:.4f}" for m in cfg.methods))
    return result


def _gps_closed_loop(sys: LtiSystem, cfg: UavScenarioConfig, method: str, window: int,
                     x_ref: np.ndarray, attacks: np.ndarray, w: np.ndarray, v: np.ndarray):
    """
    Fly u = G (x_hat - x_r) with ``method`` producing x_hat; read y,
    estimate, then act. Filter and decoder model the plant as A_o driven by
    the applied input.
    """
    steps = x_ref.shape[0]
    states = np.zeros((steps, sys.n))
    estimates = np.zeros((steps, sys.n))
    e_hats = np.zeros((steps, sys.p))

    kf = KalmanFilter(sys, p0_scale=cfg.p0_scale, open_loop=True, r_inflation=cfg.r_inflation)
    combined = CombinedEstimator(sys, window, cfg.decoder_method, p0_scale=cfg.p0_scale,
                                 open_loop=True, r_inflation=cfg.r_inflation)
    x = x_ref[0].copy()
    u_prev: Optional[np.ndarray] = None
    for t in range(steps):
        states[t] = x
        y = sys.c @ x + attacks[t] + v[t]
        if method == "kf":
            x_hat = kf.step(u_prev, y).mean.copy()
        else:
            x_hat, e_hats[t] = combined.step(u_prev, y)
            if method == "se":
                secure = combined.last_secure_state
                x_hat = secure if secure is not None else x_hat
        estimates[t] = x_hat
        u = sys.g @ (x_hat - x_ref[t])
        x = sys.a_open @ x + sys.b @ u + w[t]
        u_prev = u
    return states, estimates, e_hats


def run_gps_spoof(cfg: UavScenarioConfig) -> ScenarioResult:
    """
    Path following under GPS spoofing with the estimator inside the loop.
    Every method flies the same reference under the same noise and attack.
    """
    report = secure_design(cfg)
    window = _window_for(cfg, report)
    sys = _plant_with_noise(cfg, report.gain)
    rng = np.random.default_rng(cfg.seed)
    x_ref = desired_path(cfg.steps, cfg.params.ts, cfg.waypoints)
    attacks = _scenario_attacks(cfg, sys.p, sinusoid=True, rng=rng)
    w, v = _noise(sys, cfg.steps, rng)

    true_paths, estimates, attack_estimates = {}, {}, {}
    for method in cfg.methods:
        states, est, e_hats = _gps_closed_loop(sys, cfg, method, window, x_ref, attacks, w, v)
        true_paths[method] = states
        estimates[method] = est
        if method != "kf":
            attack_estimates[method] = e_hats

    q = max_correctable(report.support_profile, sys.p)
    if cfg.attack and q < 2:
        logger.info(f"n_y={cfg.n_y} corrects at most {q} error(s) per step; "
                    f"up to 2 sensors are attacked, residual error expected")

    result = ScenarioResult(
        scenario="gps_spoof",
        n_y=cfg.n_y,
        window=window,
        desired_path=x_ref,
        true_paths=true_paths,
        estimates=estimates,
        attacks=attacks,
        attack_estimates=attack_estimates,
        rmse={m: _axis_rmse(estimates[m] - true_paths[m], window) for m in cfg.methods},
        tracking_rmse={m: _axis_rmse(true_paths[m] - x_ref, window) for m in cfg.methods},
        design=report,
    )
    logger.info(f"GPS spoofing (n_y={cfg.n_y}, T={window}) x tracking RMSE: "
                + ", ".join(f"{m} {result.tracking_rmse[m]['x']:.4f}" for m in cfg.methods))
    return result
