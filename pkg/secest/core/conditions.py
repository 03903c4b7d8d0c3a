"""
Checkers for the recovery conditions and bounds of l1 secure decoding.

support_profile         s_i = |supp(C v_i)| for the eigenvectors v_i of A
max_correctable         largest q with 2q < min_i s_i, capped at ceil(p/2 - 1)
t_bound                 window length needed for exact decoding of q errors/step
check_rank_condition    every 2s columns of Q2' are linearly independent
check_support_condition no z with |supp(Phi z)| <= 2s (randomized falsification)
gv_nonsingular          generalized Vandermonde matrices are nonsingular
count_cancellations     per-row cancellations of a mixed eigen-trajectory
"""

import itertools
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space

from secest.core.errors import (
    BoundUndefined,
    CombinatorialBlowup,
    ComplexSpectrumWarning,
    OrderingViolation,
)
from secest.core.model import RANK_TOL, ObservabilityCode, numerical_rank

logger = logging.getLogger(__name__)

EIGVEC_SUPPORT_TOL = 1e-9
IMAGE_SUPPORT_TOL = 1e-9
GV_DET_TOL = 1e-12
CANCEL_TOL = 1e-9
EXHAUSTIVE_LIMIT = 10 ** 6
SUBSET_ENUMERATION_MAX_N = 20


@dataclass
class SupportProfile:
    """
    Eigen-support profile of the pair (A, C).

    For complex spectra the eigenvectors are replaced by the real basis
    {Re v, Im v} of each conjugate pair and ``complex_spectrum`` is set.
    """

    s: List[int]
    eigvals: List[float]
    eigvecs: List[np.ndarray]
    distinct_positive: bool
    complex_spectrum: bool = False

    @property
    def min_s(self) -> int:
        return min(self.s) if self.s else 0

    @property
    def max_s(self) -> int:
        return max(self.s) if self.s else 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "s": list(self.s),
            "eigvals": [float(v) for v in self.eigvals],
            "distinct_positive": self.distinct_positive,
            "complex_spectrum": self.complex_spectrum,
        }


@dataclass
class TBoundReport:
    """
    per_m[m] is the supremum of T_{S_m} over m-subsets; t_star the max over m.
    t_recommended is the smallest integer strictly above every T_{S_m},
    floored at n.
    """

    per_m: Dict[int, float]
    t_star: float
    t_recommended: int
    exhaustive: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "per_m": {int(k): float(v) for k, v in self.per_m.items()},
            "t_star": float(self.t_star),
            "t_recommended": int(self.t_recommended),
            "exhaustive": self.exhaustive,
        }


@dataclass
class RankCheckReport:
    holds: bool
    tested: int
    exhaustive: bool
    dependent_columns: Optional[Tuple[int, ...]] = None


def _real_eigenbasis(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray, bool]:
    vals, vecs = np.linalg.eig(A)
    scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
    is_complex = np.abs(vals.imag) > 1e-12 * scale
    if not np.any(is_complex):
        return vals.real, vecs.real, False

    out_vals, out_vecs = [], []
    seen_pairs = set()
    for i, lam in enumerate(vals):
        if not is_complex[i]:
            out_vals.append(lam.real)
            out_vecs.append(vecs[:, i].real)
            continue
        if i in seen_pairs:
            continue
        # partner: closest conjugate not yet consumed
        partners = [j for j in range(len(vals)) if j != i and j not in seen_pairs and is_complex[j]]
        j = min(partners, key=lambda k: abs(vals[k] - np.conj(lam)))
        seen_pairs.update((i, j))
        out_vals.extend([lam.real, lam.real])
        out_vecs.extend([vecs[:, i].real, vecs[:, i].imag])
    return np.array(out_vals), np.column_stack(out_vecs), True


def eigen_basis(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray, bool]:
    """
    Real eigen-decomposition sorted by ascending eigenvalue.

    Columns are unit norm with their largest-magnitude entry positive.
    Returns (eigvals, eigvecs, complex_spectrum).
    """
    vals, vecs, is_complex = _real_eigenbasis(np.asarray(A, dtype=float))
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    pivots = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivots, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vals, vecs * signs, is_complex


def support_profile(A: np.ndarray, C: np.ndarray,
                    support_tol: float = EIGVEC_SUPPORT_TOL) -> SupportProfile:
    """
    Count s_i = |supp(C v_i)| on unit-norm eigenvectors of A.

    Complex spectra are reported through ``ComplexSpectrumWarning`` and the
    ``complex_spectrum`` flag; the counts then refer to the real basis.
    """
    C = np.asarray(C, dtype=float)
    vals, vecs, is_complex = eigen_basis(A)
    if is_complex:
        warnings.warn("A has complex eigenvalues; using the real basis {Re v, Im v}",
                      ComplexSpectrumWarning, stacklevel=2)

    eigvecs = [vecs[:, k].copy() for k in range(vecs.shape[1])]
    s = [int(np.sum(np.abs(C @ v) > support_tol)) for v in eigvecs]

    gaps = np.diff(vals)
    scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
    distinct_positive = (not is_complex and bool(np.all(vals > 0))
                         and bool(np.all(gaps > 1e-9 * scale)))
    return SupportProfile(s=s, eigvals=[float(v) for v in vals], eigvecs=eigvecs,
                          distinct_positive=distinct_positive, complex_spectrum=is_complex)


def q_cap(p: int) -> int:
    """ceil(p/2 - 1), the most errors per step any decoder can correct with p sensors."""
    return max(0, math.ceil(p / 2 - 1))


def max_correctable(profile: SupportProfile, p: int) -> int:
    """Largest q with 2q < min_i s_i, capped at ceil(p/2 - 1)."""
    by_support = max(0, (profile.min_s - 1) // 2)
    return min(by_support, q_cap(p))


def _subset_bound(m: int, p: int, q: int, s_min: int, s_max: int) -> float:
    denominator = s_max - 2 * q
    if denominator <= 0:
        raise BoundUndefined(f"max S_m = {s_max} <= 2q = {2 * q}")
    return ((m - 2) * p + s_min) / denominator


def t_bound(profile: SupportProfile, p: int, q: int,
            enumerate_max_n: int = SUBSET_ENUMERATION_MAX_N) -> TBoundReport:
    """
    T_{S_m} = ((m-2) p + min S_m) / (max S_m - 2q) over all m-subsets S_m of
    the s_i, m = 2..n.

    For n up to ``enumerate_max_n`` every subset is materialized. Beyond that
    the bound is evaluated only on the extremal subsets: T_{S_m} depends on a
    subset only through its min and max, so for each m it suffices to scan
    pairs (s_(i), s_(j)) of the sorted values with j - i + 1 >= m, which
    contain every achievable (min, max) combination.

    Raises:
        BoundUndefined: some subset has max S_m <= 2q
    """
    s = sorted(int(v) for v in profile.s)
    n = len(s)
    if profile.complex_spectrum or not profile.distinct_positive:
        logger.warning("T-bound requested for a spectrum that is not real, distinct and positive")
    if n < 2:
        return TBoundReport(per_m={}, t_star=0.0, t_recommended=max(1, n))
    if s[-1] <= 2 * q:
        raise BoundUndefined(f"max s_i = {s[-1]} <= 2q = {2 * q}")

    per_m: Dict[int, float] = {}
    exhaustive = n <= enumerate_max_n
    for m in range(2, n + 1):
        best = -math.inf
        if exhaustive:
            for subset in itertools.combinations(s, m):
                best = max(best, _subset_bound(m, p, q, subset[0], subset[-1]))
        else:
            for i in range(n):
                for j in range(i + m - 1, n):
                    best = max(best, _subset_bound(m, p, q, s[i], s[j]))
        per_m[m] = best

    t_star = max(per_m.values())
    t_recommended = max(int(math.floor(t_star)) + 1, n)
    return TBoundReport(per_m=per_m, t_star=t_star, t_recommended=t_recommended,
                        exhaustive=exhaustive)


def find_dependent_columns(q2t: np.ndarray, s: int, max_subsets: Optional[int] = None,
                           seed: Optional[int] = None,
                           rank_tol: float = RANK_TOL) -> RankCheckReport:
    """
    Search 2s-column subsets of ``q2t`` for a linearly dependent one.

    Exhaustive when the number of subsets is at most ``max_subsets``
    (default 10^6), otherwise ``max_subsets`` random subsets are sampled.
    """
    cols = q2t.shape[1]
    k = 2 * s
    if k == 0:
        return RankCheckReport(holds=True, tested=0, exhaustive=True)
    if k > q2t.shape[0] or k > cols:
        return RankCheckReport(holds=False, tested=0, exhaustive=True,
                               dependent_columns=tuple(range(min(k, cols))))

    limit = EXHAUSTIVE_LIMIT if max_subsets is None else max_subsets
    total = math.comb(cols, k)
    if total <= limit:
        subsets = itertools.combinations(range(cols), k)
        exhaustive = True
    else:
        rng = np.random.default_rng(seed)
        subsets = (tuple(sorted(rng.choice(cols, size=k, replace=False))) for _ in range(limit))
        exhaustive = False

    tested = 0
    for subset in subsets:
        tested += 1
        if numerical_rank(q2t[:, list(subset)], rank_tol) < k:
            return RankCheckReport(holds=False, tested=tested, exhaustive=exhaustive,
                                   dependent_columns=tuple(int(c) for c in subset))
    return RankCheckReport(holds=True, tested=tested, exhaustive=exhaustive)


def check_rank_condition(code: ObservabilityCode, s: int, allow_sampling: bool = True,
                     n_samples: int = 10 ** 5, seed: Optional[int] = None) -> bool:
    """
    True iff every tested 2s-column submatrix of Q2' has full column rank.

    Raises:
        CombinatorialBlowup: C(pT, 2s) > 10^6 and sampling is disabled
    """
    q2t = code.q2.T
    k = 2 * s
    if k > code.rows - code.n:
        logger.debug(f"2s={k} exceeds pT-n={code.rows - code.n}; condition fails trivially")
        return False
    total = math.comb(code.rows, k)
    if total > EXHAUSTIVE_LIMIT:
        if not allow_sampling:
            raise CombinatorialBlowup(f"C({code.rows}, {k}) = {total} subsets exceed {EXHAUSTIVE_LIMIT}")
        logger.warning(f"Sampling {n_samples} of {total} column subsets for the rank check")
        report = find_dependent_columns(q2t, s, max_subsets=n_samples, seed=seed)
    else:
        report = find_dependent_columns(q2t, s)
    logger.debug(f"Rank check s={s}: holds={report.holds}, tested={report.tested}, "
                 f"exhaustive={report.exhaustive}")
    return report.holds


def support_witness(code: ObservabilityCode, columns: Sequence[int]) -> Optional[np.ndarray]:
    """
    Map a dependency among columns of Q2' to a state direction z with
    supp(Phi z) inside ``columns``.

    A null vector c of Q2'[:, columns] embedded into R^(pT) gives h with
    Q2' h = 0, so h lies in range(Phi) and z = R1^-1 Q1' h satisfies Phi z = h.
    """
    columns = list(columns)
    ns = null_space(code.q2.T[:, columns], rcond=RANK_TOL)
    if ns.shape[1] == 0:
        return None
    h = np.zeros(code.rows)
    h[columns] = ns[:, 0]
    return np.linalg.solve(code.r1, code.q1.T @ h)


def image_support(phi: np.ndarray, z: np.ndarray, tol: float = IMAGE_SUPPORT_TOL) -> int:
    """|supp(phi z)| with a threshold relative to the largest entry and ||z||."""
    image = phi @ z
    scale = max(float(np.max(np.abs(image), initial=0.0)),
                float(np.linalg.norm(phi, 2) * np.linalg.norm(z)) * 1e-3, 1e-300)
    return int(np.sum(np.abs(image) > tol * scale))


def check_support_condition(code: ObservabilityCode, s: int, n_samples: int = 10 ** 4,
                        seed: Optional[int] = None) -> bool:
    """
    One-sided randomized check of |supp(Phi z)| > 2s for all z != 0.

    Candidates: the basis directions e_k, the eigenvectors of A when the code
    was built from a system, null-space directions of random (n-1)-row subsets
    of Phi (these zero out many rows at once), and ``n_samples`` uniform
    points on the unit sphere. Returns False on the first witness.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    phi = code.phi
    n = code.n
    limit = 2 * s

    candidates: List[np.ndarray] = [np.eye(n)[k] for k in range(n)]
    if code.a is not None:
        _, vecs, _ = _real_eigenbasis(code.a)
        candidates.extend(vecs[:, k] for k in range(vecs.shape[1]))
    if n > 1:
        for _ in range(min(n_samples, 2000)):
            rows = rng.choice(code.rows, size=n - 1, replace=False)
            ns = null_space(phi[rows], rcond=RANK_TOL)
            if ns.shape[1]:
                candidates.append(ns[:, 0])

    for z in candidates:
        if np.linalg.norm(z) > 0 and image_support(phi, z) <= limit:
            logger.debug(f"Support witness found: |supp(Phi z)| <= {limit}")
            return False

    for _ in range(n_samples):
        z = rng.standard_normal(n)
        z /= np.linalg.norm(z)
        if image_support(phi, z) <= limit:
            return False
    return True


# aliases
check_prop2_rank = check_rank_condition
check_prop2_support = check_support_condition


def gv_matrix(lambdas: Sequence[float], exps: Sequence[int]) -> np.ndarray:
    """Generalized Vandermonde matrix with entries lambda_j ** x_i."""
    lam = np.asarray(lambdas, dtype=float)
    x = np.asarray(exps, dtype=float)
    return lam[np.newaxis, :] ** x[:, np.newaxis]


def gv_nonsingular(lambdas: Sequence[float], exps: Sequence[int],
                   tol: float = GV_DET_TOL) -> bool:
    """
    Nonsingularity test for a generalized Vandermonde matrix.

    Uses the Hadamard ratio |det| / prod(row norms), which is scale free.

    Raises:
        OrderingViolation: lengths differ, lambdas not ascending positive,
            or exponents not ascending nonnegative integers
    """
    lam = np.asarray(lambdas, dtype=float)
    x = np.asarray(exps)
    if lam.shape != x.shape or lam.ndim != 1:
        raise OrderingViolation("lambdas and exponents must be 1-D of equal length")
    if np.any(lam <= 0) or np.any(np.diff(lam) <= 0):
        raise OrderingViolation(f"lambdas must be ascending and positive: {lam.tolist()}")
    if np.any(x < 0) or np.any(np.diff(x) <= 0) or np.any(x != np.round(x)):
        raise OrderingViolation(f"exponents must be ascending nonnegative integers: {x.tolist()}")
    gv = gv_matrix(lam, x.astype(int))
    sign, logdet = np.linalg.slogdet(gv)
    if sign == 0:
        return False
    log_rows = float(np.sum(np.log(np.linalg.norm(gv, axis=1))))
    return bool(logdet - log_rows > math.log(tol))


def count_cancellations(A: np.ndarray, C: np.ndarray, coeffs: np.ndarray, T: int,
                        tol: float = CANCEL_TOL) -> np.ndarray:
    """
    Per-row cancellation counts of y(k) = C V Lambda^k alpha, k = 0..T-1,
    where ``coeffs`` are coordinates in the basis returned by ``eigen_basis(A)``.

    Row i cancels at step k when at least two active eigen-components reach it
    (c_i' v_j != 0) yet their sum vanishes relative to the sum of magnitudes.
    A row reached by a single component never cancels.
    """
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    alpha = np.asarray(coeffs, dtype=float).reshape(-1)
    vals, vecs, is_complex = eigen_basis(A)
    if is_complex:
        warnings.warn("count_cancellations on a complex spectrum uses the real basis",
                      ComplexSpectrumWarning, stacklevel=2)

    active = np.flatnonzero(alpha != 0.0)
    cv = C @ vecs
    counts = np.zeros(C.shape[0], dtype=int)
    for i in range(C.shape[0]):
        reach = [j for j in active if abs(cv[i, j]) > EIGVEC_SUPPORT_TOL]
        if len(reach) < 2:
            continue
        for k in range(T):
            terms = np.array([cv[i, j] * vals[j] ** k * alpha[j] for j in reach])
            if abs(terms.sum()) <= tol * np.sum(np.abs(terms)):
                counts[i] += 1
    return counts


def is_observable(A: np.ndarray, C: np.ndarray) -> bool:
    """Rank test on [C; CA; ...; CA^(n-1)]."""
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    n = A.shape[0]
    blocks, power = [], np.eye(n)
    for _ in range(n):
        blocks.append(C @ power)
        power = A @ power
    return numerical_rank(np.vstack(blocks)) == n


def fixed_support_correctable(C: np.ndarray) -> int:
    """
    Errors correctable per step from a single snapshot (T = 1): the largest q
    with |supp(C z)| > 2q for every z != 0. A direction z killing the rows of
    a subset R exists iff C[R] has a nontrivial null space; the minimum image
    support is p minus the largest such R.
    """
    C = np.asarray(C, dtype=float)
    p, n = C.shape
    largest_killable = 0
    for size in range(p, 0, -1):
        found = False
        for rows in itertools.combinations(range(p), size):
            if numerical_rank(C[list(rows)]) < n:
                found = True
                break
        if found:
            largest_killable = size
            break
    if numerical_rank(C) < n:
        return 0
    min_support = p - largest_killable
    return max(0, (min_support - 1) // 2)


def check_design_conditions(A_o: np.ndarray, B: np.ndarray, C: np.ndarray,
                            G: Optional[np.ndarray], T: int) -> Dict[str, Any]:
    """
    Evaluate the five feedback-design conditions for secure decoding:

    1. every row of C nonzero and C full rank
    2. A = A_o + B G has n distinct positive real eigenvalues
    3. (A, C) observable
    4. T exceeds the window bound for the achieved q
    5. q is maximal, i.e. equals ceil(p/2 - 1)
    """
    A_o = np.asarray(A_o, dtype=float)
    C = np.asarray(C, dtype=float)
    A = A_o if G is None else A_o + np.asarray(B, dtype=float) @ np.asarray(G, dtype=float)
    p = C.shape[0]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ComplexSpectrumWarning)
        profile = support_profile(A, C)
    q = max_correctable(profile, p)

    rows_ok = bool(np.all(np.any(C != 0.0, axis=1)))
    full_rank = numerical_rank(C) == min(C.shape)
    window_ok = False
    bound = None
    if profile.max_s > 2 * q:
        try:
            bound = t_bound(profile, p, q)
            window_ok = T >= bound.t_recommended
        except BoundUndefined:
            bound = None

    return {
        "condition_1_rows_nonzero_full_rank": rows_ok and full_rank,
        "condition_2_distinct_positive": profile.distinct_positive,
        "condition_3_observable": is_observable(A, C),
        "condition_4_window": window_ok,
        "condition_5_q_maximal": q == q_cap(p),
        "q_max": q,
        "support_profile": profile.to_dict(),
        "t_bound": bound.to_dict() if bound else None,
    }
