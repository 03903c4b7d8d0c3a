"""
Secure decoders and the sliding-window estimation protocol.

decode_qr      two-phase: basis pursuit on the annihilated data Q2' Y, then
               x0 = R1^-1 Q1' (Y - E)
decode_direct  single l1 regression min_x ||Y - Phi x||_1

Both return the estimated initial state of the window and the stacked attack
estimate. ``sliding_estimate`` decodes the latest T measurements and
propagates the estimate to the current step.

``row_support_decode`` is the fixed-support (l0 row-support) decoder used as a
baseline oracle on tiny instances only.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from secest.core.errors import DimensionMismatch, InsufficientHistory, SecestError
from secest.core.l1solve import SimplexSolver, solve_basis_pursuit, solve_l1_regression
from secest.core.model import LtiSystem, ObservabilityCode, build_observability

logger = logging.getLogger(__name__)

SUPPORT_TOL = 1e-5
SUCCESS_TOL = 1e-4
METHODS = ("qr", "direct")


@dataclass
class DecodeResult:
    """
    Attributes:
        x0_hat: Estimated state at the first step of the window
        e_hat: Estimated stacked attack (length p*T)
        per_step_supports: Sensors with |e_hat| > support threshold, per step
        residual_l1: l1 norm of the attack estimate
        unique: False when the LP reported an alternative optimal vertex
        method: "qr" or "direct"
    """

    x0_hat: np.ndarray
    e_hat: np.ndarray
    per_step_supports: List[FrozenSet[int]]
    residual_l1: float
    unique: bool = True
    method: str = "qr"

    def attack_blocks(self, p: int) -> np.ndarray:
        return self.e_hat.reshape(-1, p)


def _supports(e_hat: np.ndarray, p: int, tol: float) -> List[FrozenSet[int]]:
    return [frozenset(int(i) for i in np.flatnonzero(np.abs(block) > tol))
            for block in e_hat.reshape(-1, p)]


def _check_window(code: ObservabilityCode, y_window: np.ndarray) -> np.ndarray:
    y = np.asarray(y_window, dtype=float).reshape(-1)
    if y.shape[0] != code.rows:
        raise DimensionMismatch(f"Window has length {y.shape[0]}, code expects {code.rows}")
    return y


def decode_qr(code: ObservabilityCode, y_window: np.ndarray,
              solver: Optional[SimplexSolver] = None,
              support_tol: float = SUPPORT_TOL) -> DecodeResult:
    """
    Decode the initial state by basis pursuit on the attack-only observations.

    Q2' annihilates Phi, so Q2' Y = Q2' E depends on the attack alone. The
    sparsest (l1) E consistent with it is subtracted and the clean part is
    inverted through the thin QR factors.
    """
    y = _check_window(code, y_window)
    if code.q2.shape[1] == 0:
        # p*T == n: no redundancy, nothing can be corrected
        e_hat = np.zeros_like(y)
        unique = True
    else:
        result = solve_basis_pursuit(code.q2.T, code.q2.T @ y, solver)
        e_hat = result.vector
        unique = result.unique
    x0_hat = solve_triangular(code.r1, code.q1.T @ (y - e_hat), lower=False)
    return DecodeResult(
        x0_hat=x0_hat,
        e_hat=e_hat,
        per_step_supports=_supports(e_hat, code.p, support_tol),
        residual_l1=float(np.sum(np.abs(e_hat))),
        unique=unique,
        method="qr",
    )


def decode_direct(code: ObservabilityCode, y_window: np.ndarray,
                  solver: Optional[SimplexSolver] = None,
                  support_tol: float = SUPPORT_TOL) -> DecodeResult:
    """Decode by l1 regression on the stacked window; e_hat = Y - Phi x0_hat."""
    y = _check_window(code, y_window)
    result = solve_l1_regression(code.phi, y, solver)
    x0_hat = result.vector
    e_hat = y - code.phi @ x0_hat
    return DecodeResult(
        x0_hat=x0_hat,
        e_hat=e_hat,
        per_step_supports=_supports(e_hat, code.p, support_tol),
        residual_l1=float(np.sum(np.abs(e_hat))),
        unique=result.unique,
        method="direct",
    )


def decode(code: ObservabilityCode, y_window: np.ndarray, method: str = "qr",
           solver: Optional[SimplexSolver] = None,
           support_tol: float = SUPPORT_TOL) -> DecodeResult:
    if method == "qr":
        return decode_qr(code, y_window, solver, support_tol)
    if method == "direct":
        return decode_direct(code, y_window, solver, support_tol)
    raise ValueError(f"Unknown decoding method {method!r}; expected one of {METHODS}")


def forced_response(sys: LtiSystem, inputs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Response of the closed loop x(t+1) = A x(t) + B u(t) to a known input
    window starting from x = 0.

    Returns:
        (outputs, final_state): stacked C x(k) for k = 0..T-1 and x(T-1)
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1, sys.m)
    x = np.zeros(sys.n)
    outputs = []
    for k in range(inputs.shape[0]):
        outputs.append(sys.c @ x)
        if k < inputs.shape[0] - 1:
            x = sys.a_closed @ x + sys.b @ inputs[k]
    return np.concatenate(outputs), x


def sliding_decode(sys: LtiSystem, history: Sequence[np.ndarray], T: int, method: str = "qr",
                   inputs: Optional[Sequence[np.ndarray]] = None,
                   code: Optional[ObservabilityCode] = None,
                   solver: Optional[SimplexSolver] = None) -> Tuple[np.ndarray, np.ndarray, DecodeResult]:
    """
    Decode the most recent T measurements and propagate to the current step.

    ``inputs`` are known inputs acting through B on top of the closed loop
    (aligned with ``history``); their forced response is removed before
    decoding and added back during propagation.

    Returns:
        (x_current_hat, e_current_hat, decode_result)

    Raises:
        InsufficientHistory: fewer than T measurements available
    """
    if len(history) < T:
        raise InsufficientHistory(len(history), T)
    y_window = np.concatenate([np.asarray(y, dtype=float).reshape(-1) for y in list(history)[-T:]])
    if code is None:
        code = build_observability(sys, T)
    elif code.window != T:
        raise DimensionMismatch(f"Code window {code.window} does not match T={T}")

    offset = np.zeros(sys.n)
    if inputs is not None:
        u_window = np.asarray(list(inputs)[-T:], dtype=float).reshape(T, sys.m)
        forced_y, offset = forced_response(sys, u_window)
        y_window = y_window - forced_y

    result = decode(code, y_window, method, solver)
    x_current = np.linalg.matrix_power(sys.a_closed, T - 1) @ result.x0_hat + offset
    e_current = result.e_hat[-sys.p:].copy()
    return x_current, e_current, result


def sliding_estimate(sys: LtiSystem, history: Sequence[np.ndarray], T: int, method: str = "qr",
                     inputs: Optional[Sequence[np.ndarray]] = None,
                     code: Optional[ObservabilityCode] = None,
                     solver: Optional[SimplexSolver] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(x_current_hat, e_current_hat) from the latest T measurements."""
    x_current, e_current, _ = sliding_decode(sys, history, T, method, inputs, code, solver)
    return x_current, e_current


def is_exact_recovery(x0_hat: np.ndarray, x0: np.ndarray, tol: float = SUCCESS_TOL) -> bool:
    """Perfect recovery: ||x0_hat - x0||_inf <= tol."""
    return bool(np.max(np.abs(np.asarray(x0_hat) - np.asarray(x0))) <= tol)


def _fit_outside(code: ObservabilityCode, y: np.ndarray, excluded_rows: np.ndarray,
                 fit_tol: float) -> Optional[np.ndarray]:
    keep = np.setdiff1d(np.arange(code.rows), excluded_rows)
    phi_k = code.phi[keep]
    if np.linalg.matrix_rank(phi_k) < code.n:
        return None
    x, *_ = np.linalg.lstsq(phi_k, y[keep], rcond=None)
    scale = max(1.0, float(np.max(np.abs(y[keep]), initial=0.0)))
    if np.max(np.abs(phi_k @ x - y[keep]), initial=0.0) <= fit_tol * scale:
        return x
    return None


def row_support_decode(code: ObservabilityCode, y_window: np.ndarray,
                       max_rows: Optional[int] = None,
                       fit_tol: float = 1e-8) -> Tuple[Optional[np.ndarray], FrozenSet[int]]:
    """
    Fixed-support (l0 row-support) decoder: find the fewest sensors K such that
    the measurements of the remaining sensors over the whole window are fit
    exactly by some x0. Exponential in p; tiny instances only.

    Returns:
        (x0_hat or None, K). Ties are broken by enumeration order.
    """
    y = _check_window(code, y_window)
    p, T = code.p, code.window
    max_rows = p if max_rows is None else max_rows
    for k in range(max_rows + 1):
        for sensors in itertools.combinations(range(p), k):
            rows = np.array([t * p + i for t in range(T) for i in sensors], dtype=int)
            x = _fit_outside(code, y, rows, fit_tol)
            if x is not None:
                return x, frozenset(sensors)
    return None, frozenset(range(p))


def brute_force_decode(code: ObservabilityCode, y_window: np.ndarray, q_per_step: int,
                       fit_tol: float = 1e-8) -> List[np.ndarray]:
    """
    Oracle: every state that fits the window exactly after discarding at most
    ``q_per_step`` sensors at each step. The attack is uniquely decodable when
    all returned states coincide.
    """
    y = _check_window(code, y_window)
    p, T = code.p, code.window
    per_step = [c for k in range(q_per_step + 1) for c in itertools.combinations(range(p), k)]
    found: List[np.ndarray] = []
    for pattern in itertools.product(per_step, repeat=T):
        rows = np.array([t * p + i for t, sensors in enumerate(pattern) for i in sensors], dtype=int)
        x = _fit_outside(code, y, rows, fit_tol)
        if x is not None and not any(np.allclose(x, f, atol=1e-6) for f in found):
            found.append(x)
    return found


def decode_safely(code: ObservabilityCode, y_window: np.ndarray, method: str,
                  solver: Optional[SimplexSolver] = None) -> Optional[DecodeResult]:
    """decode() that logs and returns None on solver failure."""
    try:
        return decode(code, y_window, method, solver)
    except SecestError as e:
        logger.warning(f"Decoding failed ({method}): {e}")
        return None
