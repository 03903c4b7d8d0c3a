"""
Plant, attack and trajectory model.

The plant is a discrete LTI system

    x(t+1) = A x(t) + w(t),    A = A_o + B G
    y(t)   = C x(t) + e(t) + v(t)

where e(t) is a sparse sensor attack whose support may change from step to
step. ``build_observability`` stacks C A^t over a window of T steps into the
coding matrix Phi used by the decoders.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from secest.core.errors import (
    BudgetTooLarge,
    DimensionMismatch,
    InvalidSystem,
    UnobservableWindow,
)
from secest.utils import load_json_file
from secest.utils.schema_validator import SchemaValidator

logger = logging.getLogger(__name__)

RANK_TOL = 1e-9
SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-10
DEFAULT_ATTACK_AMPLITUDE = 10.0


def _frozen(array: Any, name: str, ndim: int = 2) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    if out.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise InvalidSystem(f"{name} contains non-finite entries")
    out.setflags(write=False)
    return out


def numerical_rank(matrix: np.ndarray, tol: float = RANK_TOL) -> int:
    """Rank with singular values below ``tol * sigma_max`` counted as zero."""
    matrix = np.atleast_2d(matrix)
    if matrix.size == 0:
        return 0
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def _check_covariance(cov: np.ndarray, size: int, name: str) -> None:
    if cov.shape != (size, size):
        raise DimensionMismatch(f"{name} must be {size}x{size}, got {cov.shape}")
    scale = max(1.0, float(np.max(np.abs(cov))))
    if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * scale:
        raise InvalidSystem(f"{name} is not symmetric")
    if np.min(np.linalg.eigvalsh(cov)) < -PSD_TOL * scale:
        raise InvalidSystem(f"{name} has a negative eigenvalue")


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """
    Discrete LTI plant with optional state feedback u = G x.

    Attributes:
        a_open: Open-loop dynamics A_o (n x n)
        b: Input matrix B (n x m)
        c: Output matrix C (p x n); every row must have a nonzero entry
        g: Feedback gain G (m x n) or None for no feedback
        proc_noise_cov: Covariance of w (n x n, symmetric PSD)
        meas_noise_cov: Covariance of v (p x p, symmetric PSD)
        a_closed: A_o + B G, or A_o when G is absent (derived)
    """

    a_open: np.ndarray
    b: np.ndarray
    c: np.ndarray
    g: Optional[np.ndarray] = None
    proc_noise_cov: Optional[np.ndarray] = None
    meas_noise_cov: Optional[np.ndarray] = None
    a_closed: np.ndarray = field(init=False)

    def __post_init__(self):
        a_open = _frozen(self.a_open, "A_o")
        n = a_open.shape[0]
        if a_open.shape != (n, n):
            raise DimensionMismatch(f"A_o must be square, got {a_open.shape}")

        b = _frozen(self.b, "B")
        if b.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got {b.shape}")
        m = b.shape[1]

        c = _frozen(self.c, "C")
        if c.shape[1] != n:
            raise DimensionMismatch(f"C must have {n} columns, got {c.shape}")
        p = c.shape[0]
        zero_rows = np.flatnonzero(~np.any(c != 0.0, axis=1))
        if zero_rows.size:
            raise InvalidSystem(f"C has identically zero rows {zero_rows.tolist()}")

        if self.g is not None:
            g = _frozen(self.g, "G")
            if g.shape != (m, n):
                raise DimensionMismatch(f"G must be {m}x{n}, got {g.shape}")
            a_closed = a_open + b @ g
        else:
            g = None
            a_closed = a_open.copy()
        a_closed.setflags(write=False)

        q = np.zeros((n, n)) if self.proc_noise_cov is None else _frozen(self.proc_noise_cov, "proc_noise_cov")
        r = np.zeros((p, p)) if self.meas_noise_cov is None else _frozen(self.meas_noise_cov, "meas_noise_cov")
        _check_covariance(q, n, "proc_noise_cov")
        _check_covariance(r, p, "meas_noise_cov")
        q.setflags(write=False)
        r.setflags(write=False)

        object.__setattr__(self, "a_open", a_open)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "a_closed", a_closed)
        object.__setattr__(self, "proc_noise_cov", q)
        object.__setattr__(self, "meas_noise_cov", r)

    @property
    def n(self) -> int:
        return self.a_open.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[0]

    def with_feedback(self, g: Optional[np.ndarray]) -> "LtiSystem":
        """Same plant with a different feedback gain."""
        return LtiSystem(self.a_open, self.b, self.c, g, self.proc_noise_cov, self.meas_noise_cov)

    def with_noise(self, proc_noise_cov: Optional[np.ndarray],
                   meas_noise_cov: Optional[np.ndarray]) -> "LtiSystem":
        return LtiSystem(self.a_open, self.b, self.c, self.g, proc_noise_cov, meas_noise_cov)


@dataclass(frozen=True, eq=False)
class ObservabilityCode:
    """
    Stacked observability matrix Phi = [C; CA; ...; CA^(T-1)] and its QR factors.

    ``q2`` spans the orthogonal complement of range(Phi), so q2.T @ phi = 0.
    ``a`` and ``c`` are kept when the code was built from a system; codes built
    from an arbitrary matrix leave them as None.
    """

    phi: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    r1: np.ndarray
    window: int
    a: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.phi.shape[1]

    @property
    def rows(self) -> int:
        return self.phi.shape[0]

    @property
    def p(self) -> int:
        return self.phi.shape[0] // self.window

    @classmethod
    def from_matrix(cls, phi: np.ndarray, window: int,
                    a: Optional[np.ndarray] = None,
                    c: Optional[np.ndarray] = None) -> "ObservabilityCode":
        """Factor an arbitrary coding matrix; rejects rank-deficient input."""
        phi = np.array(phi, dtype=float)
        if phi.ndim != 2:
            raise DimensionMismatch(f"Coding matrix must be 2-D, got shape {phi.shape}")
        if window < 1 or phi.shape[0] % window:
            raise DimensionMismatch(f"{phi.shape[0]} rows cannot be split into {window} blocks")
        n = phi.shape[1]
        rank = numerical_rank(phi)
        if rank < n:
            raise UnobservableWindow(rank, n, window)

        # LAPACK geqrf: Householder reflections
        q, r = np.linalg.qr(phi, mode="complete")
        arrays = [phi, q[:, :n], q[:, n:], np.triu(r[:n, :])]
        for arr in arrays:
            arr.setflags(write=False)
        return cls(*arrays, window=window, a=a, c=c)

    def stacked_rows(self, step: int) -> slice:
        """Row slice of block ``step`` (0-based) inside Phi."""
        p = self.p
        return slice(step * p, (step + 1) * p)


def build_observability(sys: LtiSystem, T: int) -> ObservabilityCode:
    """
    Build the coding matrix of the closed-loop pair (A, C) for a window of T steps.

    Raises:
        UnobservableWindow: rank(Phi) < n
    """
    if T < 1:
        raise DimensionMismatch(f"Window must be positive, got {T}")
    blocks = []
    power = np.eye(sys.n)
    for _ in range(T):
        blocks.append(sys.c @ power)
        power = sys.a_closed @ power
    phi = np.vstack(blocks)
    return ObservabilityCode.from_matrix(phi, T, a=sys.a_closed, c=sys.c)


@dataclass(frozen=True, eq=False)
class AttackSequence:
    """
    Per-step attack vectors e(t). Supports are derived from the nonzero
    entries, so ``per_step_support[t]`` always matches ``vectors[t]``.
    """

    vectors: np.ndarray
    per_step_support: Tuple[FrozenSet[int], ...] = field(init=False)

    def __post_init__(self):
        vectors = _frozen(self.vectors, "attack vectors")
        supports = tuple(frozenset(int(i) for i in np.flatnonzero(row)) for row in vectors)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "per_step_support", supports)

    @classmethod
    def zeros(cls, length: int, p: int) -> "AttackSequence":
        return cls(np.zeros((length, p)))

    @classmethod
    def from_vectors(cls, vectors: Sequence[Sequence[float]]) -> "AttackSequence":
        return cls(np.asarray(vectors, dtype=float))

    @property
    def length(self) -> int:
        return self.vectors.shape[0]

    @property
    def p(self) -> int:
        return self.vectors.shape[1]

    def support_sizes(self) -> List[int]:
        return [len(s) for s in self.per_step_support]

    def total_support(self) -> int:
        return int(sum(self.support_sizes()))

    def window_support_total(self, start: int, T: int) -> int:
        """Number of attacked (step, sensor) slots in steps start..start+T-1."""
        return int(sum(self.support_sizes()[start:start + T]))

    def stacked(self, start: int = 0, T: Optional[int] = None) -> np.ndarray:
        """Attack vectors of a window stacked into one p*T vector."""
        T = self.length - start if T is None else T
        return self.vectors[start:start + T].reshape(-1).copy()


class AttackPolicy(str, Enum):
    FIXED_SUPPORT = "fixed_support"
    CHANGING_SUPPORT_BUDGET = "changing_support_budget"
    RAMP_PLUS_ROVING_NOISE = "ramp_plus_roving_noise"
    SINUSOID_PLUS_ROVING_NOISE = "sinusoid_plus_roving_noise"


def _nonzero_gaussian(rng: np.random.Generator, size: int, scale: float) -> np.ndarray:
    values = scale * rng.standard_normal(size)
    # an exact zero would silently drop the slot from the support
    values[values == 0.0] = scale
    return values


def _roving_noise(rng: np.random.Generator, vectors: np.ndarray, target: int,
                  params: Dict[str, Any]) -> None:
    p = vectors.shape[1]
    candidates = params.get("roving_candidates")
    if candidates is None:
        candidates = [i for i in range(p) if i != target]
    candidates = [int(i) for i in candidates]
    if not params.get("roving", True) or not candidates:
        return
    std = float(params.get("roving_std", 1.0))
    for t in range(vectors.shape[0]):
        idx = int(rng.choice(candidates))
        vectors[t, idx] = _nonzero_gaussian(rng, 1, std)[0]


def generate_attacks(policy: AttackPolicy, p: int, T: int,
                     params: Optional[Dict[str, Any]] = None,
                     seed: Optional[int] = None,
                     rng: Optional[np.random.Generator] = None) -> AttackSequence:
    """
    Generate an attack sequence of length T over p sensors.

    Policies and their ``params``:
        fixed_support: support (iterable of sensor indices), amplitude
        changing_support_budget: budget S, amplitude. Every step gets
            floor(S/T) attacks; the remaining S - floor(S/T)*T go to random
            (step, sensor) slots that are not yet attacked.
        ramp_plus_roving_noise: slope, target, roving_std, roving_candidates
        sinusoid_plus_roving_noise: amplitude, period, target, roving_std,
            roving_candidates

    Args:
        policy: One of AttackPolicy
        p: Number of sensors
        T: Number of time steps
        params: Policy parameters
        seed: Seed for ``numpy.random.default_rng`` (ignored when ``rng`` is given)
        rng: Generator to draw from

    Raises:
        BudgetTooLarge: S > p*T for the budget policy
    """
    policy = AttackPolicy(policy)
    params = dict(params or {})
    if p < 1 or T < 1:
        raise DimensionMismatch(f"p and T must be positive, got p={p}, T={T}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    vectors = np.zeros((T, p))

    if policy is AttackPolicy.FIXED_SUPPORT:
        support = sorted(int(i) for i in params.get("support", [0]))
        if any(i < 0 or i >= p for i in support):
            raise DimensionMismatch(f"Support {support} out of range for p={p}")
        amplitude = float(params.get("amplitude", DEFAULT_ATTACK_AMPLITUDE))
        for t in range(T):
            vectors[t, support] = _nonzero_gaussian(rng, len(support), amplitude)

    elif policy is AttackPolicy.CHANGING_SUPPORT_BUDGET:
        budget = int(params.get("budget", 0))
        if budget < 0:
            raise BudgetTooLarge(f"Budget must be nonnegative, got {budget}")
        if budget > p * T:
            raise BudgetTooLarge(f"Budget S={budget} exceeds p*T={p * T}")
        amplitude = float(params.get("amplitude", DEFAULT_ATTACK_AMPLITUDE))
        per_step = budget // T
        remainder = budget - per_step * T
        mask = np.zeros((T, p), dtype=bool)
        for t in range(T):
            mask[t, rng.choice(p, size=per_step, replace=False)] = True
        if remainder:
            free = np.flatnonzero(~mask.reshape(-1))
            extra = rng.choice(free, size=remainder, replace=False)
            mask.reshape(-1)[extra] = True
        vectors[mask] = _nonzero_gaussian(rng, int(mask.sum()), amplitude)

    elif policy is AttackPolicy.RAMP_PLUS_ROVING_NOISE:
        target = int(params.get("target", 0))
        slope = float(params.get("slope", 1.0))
        vectors[:, target] = slope * np.arange(T)
        _roving_noise(rng, vectors, target, params)

    elif policy is AttackPolicy.SINUSOID_PLUS_ROVING_NOISE:
        target = int(params.get("target", 0))
        amplitude = float(params.get("amplitude", 5.0))
        period = float(params.get("period", 100))
        vectors[:, target] = amplitude * np.sin(2.0 * np.pi * np.arange(T) / period)
        _roving_noise(rng, vectors, target, params)

    return AttackSequence(vectors)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Simulated run: arrays indexed by time step along axis 0."""

    states: np.ndarray
    inputs: np.ndarray
    clean_outputs: np.ndarray
    corrupted_outputs: np.ndarray
    attacks: AttackSequence
    meas_noise: np.ndarray

    @property
    def steps(self) -> int:
        return self.states.shape[0]


def simulate(sys: LtiSystem, x0: np.ndarray, attacks: AttackSequence, steps: int,
             seed: Optional[int] = None, inputs: Optional[np.ndarray] = None,
             open_loop: bool = True) -> Trajectory:
    """
    Simulate ``steps`` steps starting from x0.

    Without inputs the closed loop x(t+1) = A x(t) + w(t) runs. With an input
    sequence (steps x m) the open-loop form A_o x + B u + w is used, or
    A x + B u + w when ``open_loop`` is False (reference input on top of the
    feedback). Noise is only sampled for nonzero covariances, so noise-free
    runs are exact.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != sys.n:
        raise DimensionMismatch(f"x0 has length {x0.shape[0]}, expected {sys.n}")
    if attacks.p != sys.p:
        raise DimensionMismatch(f"Attacks have {attacks.p} sensors, system has {sys.p}")
    if attacks.length < steps:
        raise DimensionMismatch(f"Attack sequence has {attacks.length} steps, need {steps}")
    if inputs is not None:
        inputs = np.asarray(inputs, dtype=float).reshape(steps, -1)
        if inputs.shape[1] != sys.m:
            raise DimensionMismatch(f"Inputs must have {sys.m} columns, got {inputs.shape[1]}")
    else:
        inputs = np.zeros((steps, sys.m))
        open_loop = False

    rng = np.random.default_rng(seed)
    has_w = bool(np.any(sys.proc_noise_cov))
    has_v = bool(np.any(sys.meas_noise_cov))
    dynamics = sys.a_open if open_loop else sys.a_closed

    states = np.zeros((steps, sys.n))
    clean = np.zeros((steps, sys.p))
    noise = np.zeros((steps, sys.p))
    x = x0.copy()
    for t in range(steps):
        states[t] = x
        clean[t] = sys.c @ x
        if has_v:
            noise[t] = rng.multivariate_normal(np.zeros(sys.p), sys.meas_noise_cov)
        w = rng.multivariate_normal(np.zeros(sys.n), sys.proc_noise_cov) if has_w else 0.0
        x = dynamics @ x + sys.b @ inputs[t] + w

    corrupted = clean + attacks.vectors[:steps] + noise
    logger.debug(f"Simulated {steps} steps (n={sys.n}, p={sys.p}, seed={seed})")
    return Trajectory(states, inputs, clean, corrupted, attacks, noise)


def system_from_dict(doc: Dict[str, Any]) -> LtiSystem:
    """
    Build a system from the JSON document layout (row-major nested arrays).

    Raises:
        InvalidSystem: the document does not match the schema
    """
    result = SchemaValidator().validate_system(doc)
    if not result["valid"]:
        raise InvalidSystem(f"Invalid system document: {result['errors']}")
    a = np.asarray(doc["A"], dtype=float)
    b = np.asarray(doc["B"], dtype=float) if "B" in doc else np.zeros((a.shape[0], 1))
    return LtiSystem(
        a_open=a,
        b=b,
        c=np.asarray(doc["C"], dtype=float),
        g=np.asarray(doc["G"], dtype=float) if doc.get("G") is not None else None,
        proc_noise_cov=doc.get("proc_noise_cov"),
        meas_noise_cov=doc.get("meas_noise_cov"),
    )


def load_system(path: str) -> LtiSystem:
    try:
        doc = load_json_file(path)
    except json.JSONDecodeError as e:
        raise InvalidSystem(f"{path} is not valid JSON: {e}")
    return system_from_dict(doc)


def system_to_dict(sys: LtiSystem) -> Dict[str, Any]:
    doc = {
        "A": sys.a_open.tolist(),
        "B": sys.b.tolist(),
        "C": sys.c.tolist(),
        "proc_noise_cov": sys.proc_noise_cov.tolist(),
        "meas_noise_cov": sys.meas_noise_cov.tolist(),
    }
    if sys.g is not None:
        doc["G"] = sys.g.tolist()
    return doc


def trajectory_to_frame(traj: Trajectory) -> pd.DataFrame:
    """One row per step: t, x_1..x_n, y_1..y_p, e_1..e_p."""
    n = traj.states.shape[1]
    p = traj.corrupted_outputs.shape[1]
    data: Dict[str, Iterable[float]] = {"t": np.arange(traj.steps)}
    for i in range(n):
        data[f"x_{i + 1}"] = traj.states[:, i]
    for i in range(p):
        data[f"y_{i + 1}"] = traj.corrupted_outputs[:, i]
    for i in range(p):
        data[f"e_{i + 1}"] = traj.attacks.vectors[:traj.steps, i]
    return pd.DataFrame(data)


def export_trajectory_csv(traj: Trajectory, path: str) -> str:
    trajectory_to_frame(traj).to_csv(path, index=False)
    return str(path)
