"""
Tests for the recovery-condition checkers and window bounds.
"""
import math

import numpy as np
import pytest

from secest.core.conditions import (
    SupportProfile,
    check_design_conditions,
    check_prop2_rank,
    check_prop2_support,
    check_rank_condition,
    check_support_condition,
    count_cancellations,
    find_dependent_columns,
    fixed_support_correctable,
    gv_nonsingular,
    image_support,
    is_observable,
    max_correctable,
    q_cap,
    support_profile,
    support_witness,
    t_bound,
)
from secest.core.errors import BoundUndefined, ComplexSpectrumWarning, OrderingViolation
from secest.core.model import LtiSystem, ObservabilityCode, build_observability

GV_TRIALS = 1000
CANCEL_TRIALS = 1000
CONSISTENCY_INSTANCES = 200


def _profile(s):
    """Profile with the given supports on distinct positive eigenvalues."""
    return SupportProfile(s=list(s), eigvals=[0.1 * (k + 1) for k in range(len(s))],
                          eigvecs=[], distinct_positive=True)


def test_support_profile_axis_eigenvectors():
    """Test A = diag(1, 2), C = I: each eigenvector reaches one sensor."""
    profile = support_profile(np.diag([1.0, 2.0]), np.eye(2))

    assert profile.s == [1, 1], f"Expected (1, 1), got {profile.s}"
    assert profile.distinct_positive


def test_support_profile_dense_output():
    """Test A = diag(1, 2), C = [[1, 1], [1, -1]]: every eigenvector reaches both sensors."""
    profile = support_profile(np.diag([1.0, 2.0]), np.array([[1.0, 1.0], [1.0, -1.0]]))

    assert profile.s == [2, 2], f"Expected (2, 2), got {profile.s}"


def test_support_profile_complex_spectrum_warns():
    """Test that a rotation matrix is flagged as having a complex spectrum."""
    rotation = np.array([[0.0, -0.9], [0.9, 0.0]])
    with pytest.warns(ComplexSpectrumWarning):
        profile = support_profile(rotation, np.eye(2))

    assert profile.complex_spectrum
    assert not profile.distinct_positive


@pytest.mark.parametrize("s, p, expected", [
    ([10] * 8, 10, 4),
    ([1, 10, 10], 10, 0),
    ([5] * 10, 5, 2),
])
def test_max_correctable(s, p, expected):
    """Test q_max for full supports, a weak eigenvector and the p = 5 design."""
    assert max_correctable(_profile(s), p) == expected


def test_q_cap_values():
    """Test ceil(p/2 - 1) for small sensor counts."""
    assert [q_cap(p) for p in range(1, 8)] == [0, 0, 1, 1, 2, 2, 3]


def test_t_bound_reference_design():
    """
    Test the window bound for n = 8, p = 10, all s_i = 10, q = 4.

    This test verifies that:
    - T* = 35 exactly
    - the recommended window is 36
    """
    report = t_bound(_profile([10] * 8), 10, 4)

    assert report.t_star == 35.0, f"Expected T* = 35, got {report.t_star}"
    assert report.t_recommended == 36
    assert report.exhaustive


@pytest.mark.parametrize("n, p", [(3, 4), (5, 6), (8, 10), (6, 12)])
def test_t_bound_full_support_even_p(n, p):
    """Test that for s_i = p with p even the window must exceed (n - 1) p / 2."""
    report = t_bound(_profile([p] * n), p, q_cap(p))

    assert report.t_star == pytest.approx((n - 1) * p / 2)
    assert report.t_recommended > (n - 1) * p / 2


def test_t_bound_two_states():
    """Test n = 2, s = (6, 6), p = 6, q = 1: T* = 1.5, recommended T = 2."""
    report = t_bound(_profile([6, 6]), 6, 1)

    assert report.t_star == pytest.approx(1.5)
    assert report.t_recommended == 2


def test_t_bound_extremal_scan_matches_enumeration():
    """Test that the min/max scan used for large n agrees with full enumeration."""
    profile = _profile([3, 7, 5, 9, 9, 4, 8])
    full = t_bound(profile, 9, 1)
    scanned = t_bound(profile, 9, 1, enumerate_max_n=2)

    assert not scanned.exhaustive
    assert scanned.t_star == pytest.approx(full.t_star)
    assert scanned.per_m == pytest.approx(full.per_m)


def test_t_bound_undefined():
    """Test that max s_i <= 2q raises BoundUndefined."""
    with pytest.raises(BoundUndefined):
        t_bound(_profile([2, 2, 2]), 6, 1)


def test_rank_check_all_minors_nonzero():
    """Test a 2 x 4 annihilator whose 2-column minors are all nonzero, s = 1."""
    q2t = np.array([[1.0, 0.0, 1.0, 1.0], [0.0, 1.0, 1.0, 2.0]])

    report = find_dependent_columns(q2t, 1)

    assert report.holds and report.exhaustive and report.tested == 6


def test_rank_check_zero_column():
    """Test that a zero column is always part of a dependent subset."""
    q2t = np.array([[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 1.0, 0.0]])

    report = find_dependent_columns(q2t, 1)

    assert not report.holds
    assert 3 in report.dependent_columns


def test_rank_check_gaussian_code(rng):
    """Test that an ideal Gaussian coding matrix passes the rank condition for s = 1."""
    code = ObservabilityCode.from_matrix(rng.standard_normal((8, 2)), 4)

    assert check_rank_condition(code, 1)


def test_rank_check_too_many_errors(rng):
    """Test that 2s > pT - n fails trivially."""
    code = ObservabilityCode.from_matrix(rng.standard_normal((6, 2)), 3)

    assert not check_rank_condition(code, 3)


def test_support_check_duplicated_identity():
    """Test Phi = [I; I], s = 1: z = e_1 has image support 2 <= 2."""
    code = ObservabilityCode.from_matrix(np.vstack([np.eye(2), np.eye(2)]), 2)

    assert not check_support_condition(code, 1, n_samples=100, seed=0)


def test_support_check_dense_code(rng):
    """Test that a dense well-conditioned Phi passes for small s."""
    code = ObservabilityCode.from_matrix(rng.standard_normal((12, 2)), 4)

    assert check_support_condition(code, 1, n_samples=10 ** 4, seed=0)
    assert check_support_condition(code, 0, n_samples=100, seed=0)


def test_prop2_aliases_run_the_same_checks(rng):
    """Test that the alias names give the same verdicts as the underlying checks."""
    dense = ObservabilityCode.from_matrix(rng.standard_normal((12, 2)), 4)
    duplicated = ObservabilityCode.from_matrix(np.vstack([np.eye(2), np.eye(2)]), 2)

    assert check_prop2_rank is check_rank_condition
    assert check_prop2_support is check_support_condition
    assert check_prop2_rank(dense, 1) == check_rank_condition(dense, 1)
    assert not check_prop2_support(duplicated, 1, n_samples=100, seed=0)


def test_rank_and_support_conditions_agree():
    """
    Test that the rank and support formulations never contradict each other.

    This test verifies that:
    - a support witness found by sampling implies a rank failure
    - every rank failure maps to a state with image support <= 2s
    """
    rng = np.random.default_rng(7)
    contradictions = []
    checked = 0
    for instance in range(CONSISTENCY_INSTANCES):
        n = int(rng.integers(1, 3))
        p = int(rng.integers(2, 4))
        T = int(rng.integers(1, 4))
        if p * T - n > 6 or p * T <= n:
            continue
        C = np.where(rng.random((p, n)) < 0.4, 0.0, rng.standard_normal((p, n)))
        C[~np.any(C != 0.0, axis=1), 0] = 1.0
        sys = LtiSystem(np.diag(rng.uniform(0.2, 0.9, n)), np.zeros((n, 1)), C)
        try:
            code = build_observability(sys, T)
        except Exception:
            continue
        for s in range(1, (p * T - n) // 2 + 1):
            checked += 1
            report = find_dependent_columns(code.q2.T, s)
            support_ok = check_support_condition(code, s, n_samples=200, seed=instance)
            if not support_ok and report.holds:
                contradictions.append((instance, s, "support witness without rank failure"))
            if not report.holds:
                z = support_witness(code, report.dependent_columns)
                if z is None or image_support(code.phi, z) > 2 * s:
                    contradictions.append((instance, s, "rank failure without support witness"))

    assert checked > 0, "The instance family produced nothing to check"
    assert not contradictions, f"Contradictions: {contradictions[:5]}"


@pytest.mark.parametrize("lambdas, exps", [
    ((1.0, 2.0), (1, 2)),
    ((1.0, 2.0, 3.0), (0, 1, 2)),
    ((0.5, 1.5, 2.5, 3.5), (1, 3, 4, 7)),
])
def test_gv_nonsingular_examples(lambdas, exps):
    """Test hand-checked generalized Vandermonde matrices."""
    assert gv_nonsingular(lambdas, exps)


def test_gv_nonsingular_random():
    """Test nonsingularity over random ascending (lambda, exponent) tuples with m <= 6."""
    rng = np.random.default_rng(11)
    grid = np.arange(1, 10) * 0.3
    for _ in range(GV_TRIALS):
        m = int(rng.integers(1, 7))
        lambdas = np.sort(rng.choice(grid, size=m, replace=False))
        exps = np.sort(rng.choice(8, size=m, replace=False))
        assert gv_nonsingular(lambdas, exps), f"Singular for lambdas={lambdas}, exps={exps}"


def test_gv_ordering_violation():
    """Test that descending eigenvalues are refused."""
    with pytest.raises(OrderingViolation):
        gv_nonsingular((2.0, 1.0), (0, 1))


def test_single_component_never_cancels():
    """Test that one active eigen-component gives zero cancellations."""
    counts = count_cancellations(np.diag([0.5, 0.8]), np.array([[1.0, 1.0], [1.0, -2.0]]),
                                 np.array([1.0, 0.0]), 10)

    assert np.all(counts == 0)


def test_engineered_cancellation_is_tight():
    """
    Test two components balanced so row 0 vanishes at k = 0.

    This test verifies that:
    - row 0 cancels exactly once over ten steps
    - row 1 never cancels
    """
    counts = count_cancellations(np.diag([0.5, 0.8]), np.array([[1.0, 1.0], [1.0, 2.0]]),
                                 np.array([1.0, -1.0]), 10)

    assert counts.tolist() == [1, 0], f"Unexpected cancellation counts {counts.tolist()}"


def test_cancellations_bounded_by_components():
    """Test that a row cancels at most m - 1 times for random m <= 5 mixtures."""
    rng = np.random.default_rng(5)
    for _ in range(CANCEL_TRIALS):
        m = int(rng.integers(1, 6))
        A = np.diag(np.sort(rng.uniform(0.1, 1.5, m)))
        C = rng.standard_normal((3, m))
        counts = count_cancellations(A, C, rng.standard_normal(m), 12)
        assert np.all(counts <= m - 1), f"m={m}: counts {counts.tolist()}"


def test_observability_and_single_snapshot():
    """Test observability and the T = 1 correctable count."""
    assert is_observable(np.diag([0.5, 0.7]), np.array([[1.0, 1.0]]))
    assert not is_observable(np.eye(2), np.array([[1.0, 0.0]]))
    assert fixed_support_correctable(np.eye(2)) == 0
    assert fixed_support_correctable(np.array([[1.0, 1.0]])) == 0


def test_single_snapshot_dense_output(rng):
    """Test that six generic rows on two states correct two errors from one snapshot."""
    assert fixed_support_correctable(rng.standard_normal((6, 2))) == 2


def test_design_conditions_designed_system(designed_system):
    """
    Test the five design conditions on a diagonal loop with dense C.

    This test verifies that:
    - conditions 1, 2, 3 and 5 hold
    - the window condition flips at the recommended bound
    """
    sys = designed_system
    short = check_design_conditions(sys.a_open, sys.b, sys.c, None, 6)
    long = check_design_conditions(sys.a_open, sys.b, sys.c, None, 7)

    assert long["condition_1_rows_nonzero_full_rank"]
    assert long["condition_2_distinct_positive"]
    assert long["condition_3_observable"]
    assert long["condition_5_q_maximal"] and long["q_max"] == 2
    assert long["t_bound"]["t_star"] == pytest.approx(6.0)
    assert long["condition_4_window"] and not short["condition_4_window"]
    assert math.isclose(long["t_bound"]["t_recommended"], 7)
