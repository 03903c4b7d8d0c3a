"""
Tests for the secure decoders and the sliding-window estimate.
"""
import numpy as np
import pytest

from secest.core.decoder import (
    brute_force_decode,
    decode,
    decode_direct,
    decode_qr,
    decode_safely,
    is_exact_recovery,
    row_support_decode,
    sliding_decode,
    sliding_estimate,
)
from secest.core.errors import InsufficientHistory
from secest.core.l1solve import SimplexSolver
from secest.core.model import (
    AttackSequence,
    LtiSystem,
    ObservabilityCode,
    build_observability,
    simulate,
)

TOY_PHI = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 2.0]])


@pytest.mark.parametrize("method", ["qr", "direct"])
def test_unattacked_exact_recovery(designed_system, rng, method):
    """
    Test decoding without attacks.

    This test verifies that:
    - x0 is recovered to 1e-8
    - the attack estimate vanishes
    """
    code = build_observability(designed_system, 3)
    x0 = rng.standard_normal(3)

    result = decode(code, code.phi @ x0, method)

    assert np.allclose(result.x0_hat, x0, atol=1e-8), f"{method}: x0_hat {result.x0_hat}"
    assert np.allclose(result.e_hat, 0.0, atol=1e-8), f"{method}: e_hat should vanish"
    assert result.residual_l1 <= 1e-8


def test_designed_system_roving_attack(designed_system, rng):
    """
    Test a one-sensor-per-step roving attack on a system with s_i = p.

    This test verifies that:
    - both decoders recover x0
    - the per-step supports match the injected attack
    """
    T = 4
    code = build_observability(designed_system, T)
    x0 = rng.standard_normal(3)
    vectors = np.zeros((T, designed_system.p))
    for t, sensor in enumerate([0, 3, 5, 1]):
        vectors[t, sensor] = 8.0 + t
    y = code.phi @ x0 + vectors.reshape(-1)

    via_qr = decode_qr(code, y)
    via_direct = decode_direct(code, y)

    assert is_exact_recovery(via_qr.x0_hat, x0, 1e-6), f"qr decoder gave {via_qr.x0_hat}"
    assert is_exact_recovery(via_direct.x0_hat, x0, 1e-6), f"direct decoder gave {via_direct.x0_hat}"
    assert via_qr.per_step_supports == [frozenset({0}), frozenset({3}), frozenset({5}), frozenset({1})]
    assert np.allclose(via_qr.attack_blocks(designed_system.p), vectors, atol=1e-6)


def test_uneven_budget_recovery(designed_system, rng):
    """Test that a window with two attacks in one step and none in another is still decoded."""
    T = 4
    code = build_observability(designed_system, T)
    x0 = rng.standard_normal(3)
    vectors = np.zeros((T, designed_system.p))
    vectors[0, [1, 4]] = [6.0, -7.0]
    vectors[2, 2] = 5.0
    y = code.phi @ x0 + vectors.reshape(-1)

    assert is_exact_recovery(decode(code, y).x0_hat, x0, 1e-6), "Uneven supports should decode"


def test_toy_window_is_an_l1_tie():
    """
    Test the 2-state toy code with E* = (3, 0, 0, 0).

    This test verifies that:
    - the injected attack attains the l1 optimum
    - the decoded state is one of the states consistent with one error per step
    - the true state is among those candidates
    """
    code = ObservabilityCode.from_matrix(TOY_PHI, 2)
    x0 = np.array([0.5, -1.0])
    y = TOY_PHI @ x0 + np.array([3.0, 0.0, 0.0, 0.0])

    result = decode(code, y, "direct")
    candidates = brute_force_decode(code, y, q_per_step=1)

    assert result.residual_l1 == pytest.approx(3.0), "The true attack is an l1 minimizer"
    assert any(np.allclose(c, x0, atol=1e-6) for c in candidates), "x0 must be a candidate"
    assert any(np.allclose(c, result.x0_hat, atol=1e-6) for c in candidates), \
        f"Decoded {result.x0_hat} is not consistent with one error per step"


def test_direct_scalar_window():
    """Test Phi = [1; 1], Y = (4, 4) -> x0_hat = 4."""
    code = ObservabilityCode.from_matrix(np.ones((2, 1)), 2)

    result = decode_direct(code, np.array([4.0, 4.0]))

    assert result.x0_hat[0] == pytest.approx(4.0)


def test_decoders_agree(designed_system, rng):
    """Test that the two-phase and direct decoders give the same state on an attacked window."""
    code = build_observability(designed_system, 3)
    x0 = rng.standard_normal(3)
    e = np.zeros(code.rows)
    e[[2, 9, 13]] = [5.0, -4.0, 3.0]
    y = code.phi @ x0 + e

    assert np.allclose(decode_qr(code, y).x0_hat, decode_direct(code, y).x0_hat, atol=1e-6)


def test_unknown_method_rejected(designed_system):
    """Test that an unknown decoding method raises ValueError."""
    code = build_observability(designed_system, 2)
    with pytest.raises(ValueError):
        decode(code, np.zeros(code.rows), "lasso")


def test_sliding_static_system():
    """Test A = I, C = I with a constant history: the current state is that vector."""
    sys = LtiSystem(np.eye(2), np.zeros((2, 1)), np.eye(2))
    history = [np.array([1.5, -2.0])] * 3

    x_current, e_current = sliding_estimate(sys, history, 2)

    assert np.allclose(x_current, [1.5, -2.0])
    assert np.allclose(e_current, 0.0)


def test_sliding_scalar_propagation(scalar_growth):
    """Test x(t+1) = 2 x(t), x0 = 1, T = 3: the current state estimate is 4."""
    x_current, _, result = sliding_decode(scalar_growth, [np.array([v]) for v in (1.0, 2.0, 4.0)], 3)

    assert x_current[0] == pytest.approx(4.0)
    assert result.x0_hat[0] == pytest.approx(1.0)


def test_sliding_matches_injected_attack(designed_system, rng):
    """Test that the current attack estimate equals the injected roving attack."""
    steps, T = 8, 4
    vectors = np.zeros((steps, designed_system.p))
    for t in range(steps):
        vectors[t, rng.integers(designed_system.p)] = 10.0 * (1.0 + rng.random())
    traj = simulate(designed_system, rng.standard_normal(3), AttackSequence(vectors), steps)

    for t in range(T, steps + 1):
        x_current, e_current = sliding_estimate(designed_system, list(traj.corrupted_outputs[:t]), T)
        assert np.allclose(e_current, vectors[t - 1], atol=1e-6), f"Attack estimate wrong at t={t - 1}"
        assert np.allclose(x_current, traj.states[t - 1], atol=1e-6), f"State estimate wrong at t={t - 1}"


def test_sliding_removes_known_inputs(rng):
    """
    Test sliding decoding with a known input on top of the feedback loop.

    This test verifies that:
    - the forced response is removed before decoding
    - the propagated estimate equals the true current state
    """
    A_o = np.array([[0.9, 0.2], [0.0, 0.8]])
    B = np.array([[0.0], [1.0]])
    sys = LtiSystem(A_o, B, rng.standard_normal((4, 2)), g=np.array([[-0.1, -0.2]]))
    steps, T = 6, 3
    inputs = rng.standard_normal((steps, 1))
    traj = simulate(sys, rng.standard_normal(2), AttackSequence.zeros(steps, 4), steps,
                    inputs=inputs, open_loop=False)

    x_current, _, _ = sliding_decode(sys, list(traj.corrupted_outputs), T, inputs=list(inputs))

    assert np.allclose(x_current, traj.states[-1], atol=1e-8), f"Got {x_current}, expected {traj.states[-1]}"


def test_sliding_needs_full_window(scalar_growth):
    """Test that a history shorter than T raises InsufficientHistory."""
    with pytest.raises(InsufficientHistory):
        sliding_decode(scalar_growth, [np.array([1.0])], 2)


def test_row_support_decoder_fixed_attack(designed_system, rng):
    """Test that the fixed-support decoder removes a single always-attacked sensor."""
    code = build_observability(designed_system, 2)
    x0 = rng.standard_normal(3)
    e = np.zeros((2, designed_system.p))
    e[:, 4] = [3.0, -2.0]

    x_hat, excluded = row_support_decode(code, code.phi @ x0 + e.reshape(-1))

    assert excluded == frozenset({4}), f"Expected sensor 4 excluded, got {sorted(excluded)}"
    assert np.allclose(x_hat, x0, atol=1e-8)


def test_decode_safely_returns_none_on_failure():
    """Test that solver failures are logged and turned into None."""
    code = ObservabilityCode.from_matrix(np.ones((3, 1)), 3)

    assert decode_safely(code, np.array([1.0, 2.0, 7.0]), "direct", SimplexSolver(max_iters=0)) is None
