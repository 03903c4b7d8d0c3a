"""
Kalman filtering and the combined secure-estimator + Kalman filter pipeline.

Timing convention: a filter step at time t consumes the input that drove the
plant from t-1 to t and the measurement y(t). The very first step has no
prediction.
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, Optional, Sequence, Tuple

import numpy as np

from secest.core.decoder import sliding_decode
from secest.core.errors import DimensionMismatch, SecestError, SingularInnovation
from secest.core.l1solve import SimplexSolver
from secest.core.model import LtiSystem, ObservabilityCode, build_observability

logger = logging.getLogger(__name__)

DEFAULT_P0_SCALE = 10.0
INNOVATION_TOL = 1e-14
FILTER_METHODS = ("kf", "se", "se+kf")


@dataclass
class KalmanState:
    """Posterior mean and covariance after ``t`` measurement updates."""

    mean: np.ndarray
    cov: np.ndarray
    t: int = 0


def initial_state(sys: LtiSystem, x0: Optional[np.ndarray] = None,
                  p0: Optional[np.ndarray] = None,
                  p0_scale: float = DEFAULT_P0_SCALE) -> KalmanState:
    mean = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float).reshape(sys.n).copy()
    cov = p0_scale * np.eye(sys.n) if p0 is None else np.asarray(p0, dtype=float).copy()
    return KalmanState(mean=mean, cov=cov, t=0)


def _predict(sys: LtiSystem, state: KalmanState, u: Optional[np.ndarray],
             open_loop: bool) -> Tuple[np.ndarray, np.ndarray]:
    A = sys.a_open if open_loop else sys.a_closed
    mean = A @ state.mean
    if u is not None:
        mean = mean + sys.b @ np.asarray(u, dtype=float).reshape(sys.m)
    cov = A @ state.cov @ A.T + sys.proc_noise_cov
    return mean, (cov + cov.T) / 2


def _update(sys: LtiSystem, mean: np.ndarray, cov: np.ndarray, y: Optional[np.ndarray],
            r_inflation: float) -> Tuple[np.ndarray, np.ndarray]:
    if y is None or not np.isfinite(r_inflation):
        return mean, cov
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != sys.p:
        raise DimensionMismatch(f"Measurement has length {y.shape[0]}, expected {sys.p}")
    C = sys.c
    R = r_inflation * sys.meas_noise_cov
    S = C @ cov @ C.T + R
    S = (S + S.T) / 2
    scale = max(1.0, float(np.max(np.abs(S))))
    if not np.all(np.isfinite(S)) or np.min(np.linalg.eigvalsh(S)) <= INNOVATION_TOL * scale:
        raise SingularInnovation("Innovation covariance is not invertible")
    K = np.linalg.solve(S, C @ cov).T
    mean = mean + K @ (y - C @ mean)
    # Joseph form keeps cov symmetric PSD
    I_KC = np.eye(sys.n) - K @ C
    cov = I_KC @ cov @ I_KC.T + K @ R @ K.T
    return mean, (cov + cov.T) / 2


def kf_step(sys: LtiSystem, state: KalmanState, u: Optional[np.ndarray], y: Optional[np.ndarray],
            open_loop: bool = False, r_inflation: float = 1.0) -> KalmanState:
    """
    One Kalman filter step.

    Prediction uses the closed loop A x + B u (u is a known input on top of
    the feedback) or, with ``open_loop``, A_o x + B u. ``y=None`` or an
    infinite ``r_inflation`` skips the measurement update.

    Raises:
        SingularInnovation: C P C' + R is not invertible
    """
    if state.t == 0:
        mean, cov = state.mean.copy(), state.cov.copy()
    else:
        mean, cov = _predict(sys, state, u, open_loop)
    mean, cov = _update(sys, mean, cov, y, r_inflation)
    return KalmanState(mean=mean, cov=cov, t=state.t + 1)


class KalmanFilter:
    """Stateful wrapper around ``kf_step``."""

    def __init__(self, sys: LtiSystem, x0: Optional[np.ndarray] = None,
                 p0: Optional[np.ndarray] = None, p0_scale: float = DEFAULT_P0_SCALE,
                 open_loop: bool = False, r_inflation: float = 1.0):
        self.sys = sys
        self.open_loop = open_loop
        self.r_inflation = r_inflation
        self.state = initial_state(sys, x0, p0, p0_scale)

    @property
    def mean(self) -> np.ndarray:
        return self.state.mean

    @property
    def cov(self) -> np.ndarray:
        return self.state.cov

    def step(self, u: Optional[np.ndarray], y: Optional[np.ndarray]) -> KalmanState:
        self.state = kf_step(self.sys, self.state, u, y, self.open_loop, self.r_inflation)
        return self.state


class CombinedEstimator:
    """
    Secure estimator in front of a Kalman filter.

    Each step estimates the current attack e(t) from the last T measurements,
    feeds y(t) - e(t) to the filter and returns the filter mean. Until the
    window has filled (t < T) the attack estimate is zero and the pipeline is
    the plain filter.

    ``known_input`` passed to ``step`` is the input acting on the closed loop
    A = A_o + B G (for example -G x_r when tracking a reference); the decoder
    removes its forced response. It follows the same timing as ``u``.

    With ``open_loop`` both the filter and the decoder use x+ = A_o x + B u
    and the applied ``u`` is the decoder's known input. This is the exact
    model when the plant is driven by an estimate-based law u = G (x_hat - x_r).
    """

    def __init__(self, sys: LtiSystem, T: int, method: str = "qr",
                 code: Optional[ObservabilityCode] = None,
                 solver: Optional[SimplexSolver] = None,
                 x0: Optional[np.ndarray] = None, p0: Optional[np.ndarray] = None,
                 p0_scale: float = DEFAULT_P0_SCALE, open_loop: bool = False,
                 r_inflation: float = 1.0):
        if T < 1:
            raise ValueError(f"Window length must be positive, got {T}")
        self.sys = sys
        self.T = T
        self.method = method
        self.open_loop = open_loop
        self.decode_sys = sys.with_feedback(None) if open_loop else sys
        self.code = code if code is not None else build_observability(self.decode_sys, T)
        self.solver = solver
        self.kf = KalmanFilter(sys, x0, p0, p0_scale, open_loop, r_inflation)
        self.window: Deque[np.ndarray] = deque(maxlen=T)
        self.known_inputs: Deque[np.ndarray] = deque(maxlen=T)
        self.last_secure_state: Optional[np.ndarray] = None
        self.decode_failures = 0

    @property
    def t(self) -> int:
        return self.kf.state.t

    def _decoder_inputs(self) -> Optional[Sequence[np.ndarray]]:
        if not any(np.any(u) for u in self.known_inputs):
            return None
        # entry k drives x(k) -> x(k+1); the last one acts beyond the window
        return list(self.known_inputs)[1:] + [np.zeros(self.sys.m)]

    def estimate_attack(self) -> np.ndarray:
        """Attack estimate for the newest measurement in the window."""
        self.last_secure_state = None
        if self.t < self.T or len(self.window) < self.T:
            return np.zeros(self.sys.p)
        try:
            x_current, e_current, _ = sliding_decode(
                self.decode_sys, list(self.window), self.T, self.method,
                inputs=self._decoder_inputs(), code=self.code, solver=self.solver)
        except SecestError as e:
            self.decode_failures += 1
            logger.warning(f"Secure decoding failed at t={self.t}, using zero attack estimate: {e}")
            return np.zeros(self.sys.p)
        self.last_secure_state = x_current
        return e_current

    def step(self, u: Optional[np.ndarray], y: np.ndarray,
             known_input: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        y = np.asarray(y, dtype=float).reshape(-1)
        self.window.append(y)
        if known_input is None and self.open_loop:
            known_input = u
        ku = np.zeros(self.sys.m) if known_input is None else np.asarray(known_input, dtype=float).reshape(self.sys.m)
        self.known_inputs.append(ku)
        e_hat = self.estimate_attack()
        self.kf.step(u, y - e_hat)
        return self.kf.mean.copy(), e_hat


def combined_step(est: CombinedEstimator, sys: LtiSystem, u: Optional[np.ndarray], y: np.ndarray,
                  known_input: Optional[np.ndarray] = None
                  ) -> Tuple[CombinedEstimator, np.ndarray, np.ndarray]:
    """Functional form of ``CombinedEstimator.step``: (est, x_hat, e_hat)."""
    if est.sys is not sys:
        raise DimensionMismatch("Estimator was built for a different system")
    x_hat, e_hat = est.step(u, y, known_input)
    return est, x_hat, e_hat


def run_filters(sys: LtiSystem, y_seq: np.ndarray, inputs: Optional[np.ndarray], T: int,
                methods: Sequence[str] = FILTER_METHODS,
                known_inputs: Optional[np.ndarray] = None,
                decoder_method: str = "qr", open_loop: bool = False,
                p0_scale: float = DEFAULT_P0_SCALE, r_inflation: float = 1.0,
                solver: Optional[SimplexSolver] = None) -> Dict[str, np.ndarray]:
    """
    Run the requested estimators over a recorded measurement sequence.

    ``inputs[t]`` and ``known_inputs[t]`` are the inputs applied after
    measurement t (the layout ``simulate`` uses). "se" is the secure decoder
    alone and reports the plain filter mean until its window has filled.
    The secure methods share one decode per step.

    Returns:
        {method: steps x n estimates} plus "e_hat": steps x p attack estimates
    """
    unknown = set(methods) - set(FILTER_METHODS)
    if unknown:
        raise ValueError(f"Unknown estimator methods {sorted(unknown)}; expected {FILTER_METHODS}")
    y_seq = np.asarray(y_seq, dtype=float)
    steps = y_seq.shape[0]

    def _inputs_at(seq: Optional[np.ndarray], t: int) -> Optional[np.ndarray]:
        if seq is None or t == 0:
            return None
        return np.asarray(seq[t - 1], dtype=float)

    kf = KalmanFilter(sys, p0_scale=p0_scale, open_loop=open_loop, r_inflation=r_inflation)
    combined = CombinedEstimator(sys, T, decoder_method, solver=solver, p0_scale=p0_scale,
                                 open_loop=open_loop, r_inflation=r_inflation)
    needs_secure = bool({"se", "se+kf"} & set(methods))

    out = {name: np.zeros((steps, sys.n)) for name in methods}
    out["e_hat"] = np.zeros((steps, sys.p))
    for t in range(steps):
        u = _inputs_at(inputs, t)
        kf.step(u, y_seq[t])
        if "kf" in methods:
            out["kf"][t] = kf.mean
        if not needs_secure:
            continue
        x_hat, e_hat = combined.step(u, y_seq[t], _inputs_at(known_inputs, t))
        out["e_hat"][t] = e_hat
        if "se+kf" in methods:
            out["se+kf"][t] = x_hat
        if "se" in methods:
            secure = combined.last_secure_state
            out["se"][t] = secure if secure is not None else kf.mean
    logger.debug(f"Ran {list(methods)} over {steps} steps (T={T})")
    return out
