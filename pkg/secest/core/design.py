"""
Feedback synthesis for control performance and secure decodability.

Sign convention throughout: u = G x, so the closed loop is A = A_o + B G
(G = -K for the classical K of u = -K x).
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal
from scipy.linalg import solve_discrete_lyapunov

from secest.core.conditions import (
    ComplexSpectrumWarning,
    SupportProfile,
    TBoundReport,
    check_design_conditions,
    max_correctable,
    support_profile,
    t_bound,
)
from secest.core.errors import (
    BoundUndefined,
    IllConditionedAssignment,
    NoImprovement,
    OrderingViolation,
    RiccatiDivergence,
    UncontrollablePair,
)
from secest.core.model import numerical_rank

logger = logging.getLogger(__name__)

RICCATI_MAX_ITERS = 100000
RICCATI_TOL = 1e-12
COND_LIMIT = 1e10
MIN_POLE_GAP = 1e-3


@dataclass
class DesignReport:
    gain: np.ndarray
    closed_poles: List[float]
    support_profile: SupportProfile
    q_max: int
    t_bound: Optional[TBoundReport]
    conditions_met: Dict[str, bool]
    base_poles: List[float] = field(default_factory=list)
    base_profile: Optional[SupportProfile] = None
    perturbation: List[float] = field(default_factory=list)
    improved: bool = False
    lqr_profile: Optional[SupportProfile] = None
    lqr_cost_degradation: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gain": self.gain.tolist(),
            "closed_poles": [float(p) for p in self.closed_poles],
            "support_profile": self.support_profile.to_dict(),
            "q_max": int(self.q_max),
            "t_bound": self.t_bound.to_dict() if self.t_bound else None,
            "conditions_met": dict(self.conditions_met),
            "base_poles": [float(p) for p in self.base_poles],
            "base_profile": self.base_profile.to_dict() if self.base_profile else None,
            "perturbation": [float(p) for p in self.perturbation],
            "improved": self.improved,
            "lqr_profile": self.lqr_profile.to_dict() if self.lqr_profile else None,
            "lqr_cost_degradation": self.lqr_cost_degradation,
        }


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """[B, AB, ..., A^(n-1) B]"""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, m = B.shape
    ctrb = np.zeros((n, n * m))
    ctrb[:, :m] = B
    for k in range(1, n):
        ctrb[:, k * m:(k + 1) * m] = A @ ctrb[:, (k - 1) * m:k * m]
    return ctrb


def is_controllable(A: np.ndarray, B: np.ndarray) -> bool:
    return numerical_rank(controllability_matrix(A, B)) == np.asarray(A).shape[0]


def lqr_gain(A_o: np.ndarray, B: np.ndarray, Q_cost: np.ndarray, R_cost: np.ndarray,
             horizon_tol: float = RICCATI_TOL, max_iters: int = RICCATI_MAX_ITERS) -> np.ndarray:
    """
    Discrete infinite-horizon LQR gain by Riccati fixed-point iteration.

    Iterates P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA from P = Q until the
    relative change drops below ``horizon_tol``.

    Returns:
        G with u = G x

    Raises:
        RiccatiDivergence: no convergence within ``max_iters``
    """
    A = np.asarray(A_o, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.asarray(Q_cost, dtype=float)
    R = np.atleast_2d(np.asarray(R_cost, dtype=float))
    if np.min(np.linalg.eigvalsh((R + R.T) / 2)) <= 0:
        raise ValueError("R_cost must be positive definite")

    P = Q.copy()
    for it in range(max_iters):
        BtP = B.T @ P
        K = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ K
        P_next = (P_next + P_next.T) / 2
        if not np.all(np.isfinite(P_next)):
            raise RiccatiDivergence(f"Riccati iteration overflowed after {it} steps")
        delta = np.max(np.abs(P_next - P))
        P = P_next
        if delta <= horizon_tol * max(1.0, float(np.max(np.abs(P)))):
            logger.debug(f"Riccati iteration converged in {it + 1} steps")
            BtP = B.T @ P
            return -np.linalg.solve(R + BtP @ B, BtP @ A)
    raise RiccatiDivergence(f"Riccati iteration did not converge in {max_iters} steps")


def lqr_cost(A_o: np.ndarray, B: np.ndarray, G: np.ndarray,
             Q_cost: np.ndarray, R_cost: np.ndarray) -> float:
    """
    Expected infinite-horizon cost sum x'Qx + u'Ru under u = G x for
    x0 ~ N(0, I): trace of the closed-loop Lyapunov solution. Infinite for an
    unstable loop.
    """
    A = np.asarray(A_o, dtype=float) + np.asarray(B, dtype=float) @ np.asarray(G, dtype=float)
    if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
        return float("inf")
    weight = np.asarray(Q_cost, dtype=float) + G.T @ np.atleast_2d(R_cost) @ G
    P = solve_discrete_lyapunov(A.T, weight)
    return float(np.trace(P))


def place_poles(A_o: np.ndarray, B: np.ndarray, desired: Sequence[float],
                cond_limit: float = COND_LIMIT) -> np.ndarray:
    """
    Robust eigenstructure assignment for distinct real poles.

    Uses the Tits-Yang iteration of ``scipy.signal.place_poles``, which
    picks closed-loop eigenvectors as close to orthogonal as the admissible
    subspaces allow. Multi-input plants with symmetric subsystems (the
    quadrotor's x and y chains) are handled without rank-deficient
    eigenvector matrices.

    Raises:
        UncontrollablePair: (A_o, B) not controllable
        OrderingViolation: poles repeated or not real
        IllConditionedAssignment: cond(V) > cond_limit, or the placement failed
    """
    A = np.asarray(A_o, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n = A.shape[0]
    poles = np.asarray(desired, dtype=float).reshape(-1)
    if poles.shape[0] != n:
        raise OrderingViolation(f"Need {n} poles, got {poles.shape[0]}")
    if np.any(np.diff(np.sort(poles)) <= 0):
        raise OrderingViolation(f"Desired poles must be distinct: {poles.tolist()}")
    if not is_controllable(A, B):
        raise UncontrollablePair("(A_o, B) is not controllable; pole placement invalid")

    try:
        result = signal.place_poles(A, B, poles, method="YT")
    except ValueError as e:
        raise IllConditionedAssignment(f"Pole placement failed: {e}") from e

    cond = np.linalg.cond(result.X)
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedAssignment(f"Eigenvector matrix condition number {cond:.3e} exceeds {cond_limit:.0e}")
    # scipy places A - B K
    return -np.asarray(result.gain_matrix, dtype=float)


def closed_loop_poles(A_o: np.ndarray, B: np.ndarray, G: np.ndarray) -> np.ndarray:
    eig = np.linalg.eigvals(np.asarray(A_o) + np.asarray(B) @ np.asarray(G))
    return np.sort_complex(eig)


def lqr_reference_poles(A_o: np.ndarray, B: np.ndarray, Q_cost: np.ndarray, R_cost: np.ndarray,
                        low: float = 0.05, high: float = 0.98, min_gap: float = 0.01) -> np.ndarray:
    """
    Starting poles for secure design: magnitudes of the LQR closed-loop poles,
    clipped into [low, high] and spread to be at least ``min_gap`` apart.
    """
    G = lqr_gain(A_o, B, Q_cost, R_cost)
    mags = np.sort(np.clip(np.abs(closed_loop_poles(A_o, B, G)), low, high))
    n = mags.shape[0]
    for i in range(n - 2, -1, -1):
        mags[i] = min(mags[i], mags[i + 1] - min_gap)
    for i in range(n):
        floor = low + i * min_gap
        if mags[i] < floor:
            mags[i] = floor
    return np.sort(mags)


def _valid_poles(poles: np.ndarray, base: np.ndarray, max_shift: float,
                 max_pole: float = 1.0) -> bool:
    if np.any(poles <= 0) or np.any(poles >= 1) or np.any(poles > max_pole + 1e-12):
        return False
    if np.any(np.abs(poles - base) > max_shift + 1e-12):
        return False
    return bool(np.all(np.diff(np.sort(poles)) >= MIN_POLE_GAP))


def _evaluate(A_o, B, C, poles) -> Optional[Tuple[np.ndarray, SupportProfile]]:
    try:
        G = place_poles(A_o, B, poles)
    except (IllConditionedAssignment, OrderingViolation) as e:
        logger.debug(f"Pole set rejected: {e}")
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ComplexSpectrumWarning)
        profile = support_profile(A_o + B @ G, C)
    return G, profile


def _score(profile: Optional[SupportProfile], poles: np.ndarray, base: np.ndarray):
    if profile is None:
        return (-1, -1, -np.inf)
    return (profile.min_s, sum(profile.s), -float(np.sum(np.abs(poles - base))))


def perturb_for_security(A_o: np.ndarray, B: np.ndarray, C: np.ndarray, base_poles: Sequence[float],
                         max_shift: float = 0.1, target: str = "max_q", iterations: int = 200,
                         window: Optional[int] = None, strict: bool = False,
                         Q_cost: Optional[np.ndarray] = None,
                         R_cost: Optional[np.ndarray] = None,
                         max_pole: float = 1.0) -> DesignReport:
    """
    Hill-climb pole perturbations within +-max_shift of ``base_poles`` to
    maximize min_i s_i (ties: larger sum of s_i, then smaller total shift).

    Poles stay in (0, 1), at most ``max_pole`` and at least 1e-3 apart.
    Each sweep tries +-step on every pole; a sweep without improvement
    halves the step, starting from max_shift/4. Stops at min_i s_i = p or
    after ``iterations`` sweeps.

    Raises:
        NoImprovement: ``strict`` and the target support was not reached
            (the best report is attached)
    """
    if target != "max_q":
        raise ValueError(f"Unsupported target {target!r}")
    if max_shift <= 0:
        raise ValueError("max_shift must be positive")
    A_o = np.asarray(A_o, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A_o.shape[0], -1)
    C = np.asarray(C, dtype=float)
    p = C.shape[0]
    base = np.sort(np.asarray(base_poles, dtype=float))

    current = base.copy()
    evaluated = _evaluate(A_o, B, C, current)
    base_profile = evaluated[1] if evaluated else None
    best_score = _score(base_profile, current, base)

    step = max_shift / 4
    for sweep in range(iterations):
        if evaluated and evaluated[1].min_s >= p:
            break
        moved = False
        for i in range(len(current)):
            for direction in (1.0, -1.0):
                candidate = current.copy()
                candidate[i] += direction * step
                if not _valid_poles(candidate, base, max_shift, max_pole):
                    continue
                result = _evaluate(A_o, B, C, candidate)
                score = _score(result[1] if result else None, candidate, base)
                if score > best_score:
                    current, evaluated, best_score, moved = candidate, result, score, True
        if not moved:
            step /= 2
            if step < 1e-6:
                break
        logger.debug(f"Sweep {sweep}: min s = {best_score[0]}, step = {step:.3g}")

    if evaluated is None:
        raise NoImprovement("No admissible pole set found near the base poles")

    G, profile = evaluated
    q = max_correctable(profile, p)
    try:
        bound = t_bound(profile, p, q) if profile.max_s > 2 * q else None
    except BoundUndefined:
        bound = None
    conditions = check_design_conditions(A_o, B, C, G, window or A_o.shape[0])
    degradation = None
    if Q_cost is not None and R_cost is not None:
        reference = lqr_cost(A_o, B, lqr_gain(A_o, B, Q_cost, R_cost), Q_cost, R_cost)
        degradation = lqr_cost(A_o, B, G, Q_cost, R_cost) / reference - 1.0

    report = DesignReport(
        gain=G,
        closed_poles=[float(v) for v in np.sort(np.real(closed_loop_poles(A_o, B, G)))],
        support_profile=profile,
        q_max=q,
        t_bound=bound,
        conditions_met={k: bool(v) for k, v in conditions.items() if k.startswith("condition_")},
        base_poles=base.tolist(),
        base_profile=base_profile,
        perturbation=(np.sort(current) - base).tolist(),
        improved=base_profile is None or profile.min_s > base_profile.min_s,
        lqr_cost_degradation=degradation,
    )
    if profile.min_s < p:
        message = f"Best design reaches min s_i = {profile.min_s} < p = {p}"
        if strict:
            raise NoImprovement(message, report=report)
        logger.warning(message)
    return report


def design_secure_feedback(A_o: np.ndarray, B: np.ndarray, C: np.ndarray,
                           Q_cost: Optional[np.ndarray] = None, R_cost: Optional[np.ndarray] = None,
                           max_shift: float = 0.1, iterations: int = 200,
                           window: Optional[int] = None, max_pole: float = 0.98) -> DesignReport:
    """
    LQR first, then perturb its pole magnitudes for decodability:
    LQR gain -> reference poles -> pole placement -> perturbation search.

    ``max_pole`` caps the reference poles and the search.
    """
    A_o = np.asarray(A_o, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A_o.shape[0], -1)
    n, m = B.shape
    Q_cost = np.eye(n) if Q_cost is None else np.asarray(Q_cost, dtype=float)
    R_cost = np.eye(m) if R_cost is None else np.asarray(R_cost, dtype=float)

    G_lqr = lqr_gain(A_o, B, Q_cost, R_cost)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ComplexSpectrumWarning)
        lqr_profile = support_profile(A_o + B @ G_lqr, C)
    base = lqr_reference_poles(A_o, B, Q_cost, R_cost, high=max_pole)
    logger.info(f"LQR design: min s_i = {lqr_profile.min_s}, q_max = "
                f"{max_correctable(lqr_profile, C.shape[0])}")

    report = perturb_for_security(A_o, B, C, base, max_shift=max_shift, iterations=iterations,
                                  window=window, Q_cost=Q_cost, R_cost=R_cost,
                                  max_pole=max_pole)
    report.lqr_profile = lqr_profile
    logger.info(f"Secure design: min s_i = {report.support_profile.min_s}, q_max = {report.q_max}")
    return report
