"""
Tests for the plant, attack and trajectory model.
"""
import json

import numpy as np
import pandas as pd
import pytest

from secest.core.errors import BudgetTooLarge, DimensionMismatch, InvalidSystem, UnobservableWindow
from secest.core.model import (
    AttackPolicy,
    AttackSequence,
    LtiSystem,
    ObservabilityCode,
    build_observability,
    export_trajectory_csv,
    generate_attacks,
    load_system,
    simulate,
    system_to_dict,
    trajectory_to_frame,
)


def _diag_system(diag, C):
    n = len(diag)
    return LtiSystem(np.diag(diag), np.zeros((n, 1)), np.atleast_2d(C))


def test_observability_identity_pair():
    """
    Test the coding matrix of A = I, C = I over two steps.

    This test verifies that:
    - Phi is the stack [I; I]
    - q2 annihilates Phi
    """
    code = build_observability(_diag_system([1.0, 1.0], np.eye(2)), 2)

    assert np.allclose(code.phi, np.vstack([np.eye(2), np.eye(2)])), "Phi should be [I; I]"
    assert np.allclose(code.q2.T @ code.phi, 0.0), "q2' Phi should vanish"
    assert code.q2.shape == (4, 2), f"Unexpected annihilator shape {code.q2.shape}"


def test_observability_hand_computed():
    """
    Test Phi for A = diag(1, 2), C = [1 1], T = 2.

    This test verifies that:
    - Phi = [[1, 1], [1, 2]]
    - the thin QR factors reproduce Phi
    """
    code = build_observability(_diag_system([1.0, 2.0], [[1.0, 1.0]]), 2)

    assert np.allclose(code.phi, [[1.0, 1.0], [1.0, 2.0]]), f"Unexpected Phi {code.phi}"
    assert np.allclose(code.q1 @ code.r1, code.phi), "Q1 R1 should equal Phi"
    assert code.window == 2 and code.p == 1 and code.n == 2


def test_observability_rejects_unobservable_pair():
    """Test that A = I with C = [1 0] is unobservable for any window."""
    sys = _diag_system([1.0, 1.0], [[1.0, 0.0]])
    for T in (1, 3, 10):
        with pytest.raises(UnobservableWindow):
            build_observability(sys, T)


def test_system_rejects_zero_output_row():
    """Test that a C with an identically zero row is refused."""
    with pytest.raises(InvalidSystem):
        _diag_system([0.5, 0.6], [[1.0, 0.0], [0.0, 0.0]])


def test_system_rejects_shape_mismatch():
    """Test that a G of the wrong shape raises DimensionMismatch."""
    with pytest.raises(DimensionMismatch):
        LtiSystem(np.eye(2), np.ones((2, 1)), np.eye(2), g=np.ones((2, 2)))


def test_closed_loop_matrix():
    """Test that a_closed equals A_o + B G and the system stays immutable."""
    A_o = np.array([[1.0, 0.1], [0.0, 1.0]])
    B = np.array([[0.0], [1.0]])
    G = np.array([[-0.5, -1.0]])
    sys = LtiSystem(A_o, B, np.eye(2), G)

    assert np.allclose(sys.a_closed, A_o + B @ G), "Closed loop should be A_o + B G"
    with pytest.raises(ValueError):
        sys.a_closed[0, 0] = 3.0


def test_simulate_zero_everything():
    """
    Test a simulation from the origin without attacks or noise.

    This test verifies that:
    - all states and outputs stay at zero
    """
    sys = _diag_system([0.9, 1.1], np.eye(2))
    traj = simulate(sys, np.zeros(2), AttackSequence.zeros(5, 2), 5, seed=0)

    assert np.all(traj.states == 0.0), "States should remain zero"
    assert np.all(traj.corrupted_outputs == 0.0), "Outputs should remain zero"


def test_simulate_scalar_geometric_growth(scalar_growth):
    """Test that x(t+1) = 2 x(t) from x0 = 1 reports outputs (1, 2, 4)."""
    traj = simulate(scalar_growth, np.array([1.0]), AttackSequence.zeros(3, 1), 3)

    assert np.allclose(traj.corrupted_outputs.ravel(), [1.0, 2.0, 4.0]), \
        f"Expected (1, 2, 4), got {traj.corrupted_outputs.ravel()}"


def test_simulate_additive_attack(designed_system):
    """Test that the corrupted output differs from the clean one by exactly the attack."""
    p = designed_system.p
    vectors = np.zeros((3, p))
    vectors[1, 0] = 5.0
    traj = simulate(designed_system, np.ones(3), AttackSequence(vectors), 3)

    assert np.allclose(traj.corrupted_outputs[1] - traj.clean_outputs[1], vectors[1]), \
        "Corruption should equal the injected attack"


def test_budget_policy_spreads_attacks():
    """
    Test changing_support_budget with S = 20, T = 8, p = 10.

    This test verifies that:
    - every step carries at least two attacks
    - the total support equals the budget
    """
    attacks = generate_attacks(AttackPolicy.CHANGING_SUPPORT_BUDGET, 10, 8, {"budget": 20}, seed=3)

    assert min(attacks.support_sizes()) >= 2, f"Per-step supports {attacks.support_sizes()}"
    assert attacks.total_support() == 20, "Total support should equal the budget"
    assert attacks.window_support_total(0, 8) == 20


def test_budget_policy_rejects_excess_budget():
    """Test that S > p*T raises BudgetTooLarge."""
    with pytest.raises(BudgetTooLarge):
        generate_attacks(AttackPolicy.CHANGING_SUPPORT_BUDGET, 2, 3, {"budget": 7}, seed=0)


def test_fixed_support_policy():
    """Test that a fixed support {2} over three steps only touches sensor 2."""
    attacks = generate_attacks(AttackPolicy.FIXED_SUPPORT, 4, 3, {"support": [2]}, seed=1)

    assert all(s == frozenset({2}) for s in attacks.per_step_support), \
        f"Unexpected supports {attacks.per_step_support}"


def test_ramp_policy_with_roving_noise():
    """
    Test ramp_plus_roving_noise with slope 1 over four steps.

    This test verifies that:
    - sensor 0 carries 0, 1, 2, 3
    - exactly one other sensor is attacked at each step
    """
    attacks = generate_attacks(AttackPolicy.RAMP_PLUS_ROVING_NOISE, 5, 4, {"slope": 1.0}, seed=2)

    assert np.allclose(attacks.vectors[:, 0], [0.0, 1.0, 2.0, 3.0]), "Ramp values are wrong"
    for t in range(4):
        others = attacks.per_step_support[t] - {0}
        assert len(others) == 1, f"Step {t} should have one roving sensor, got {others}"


def test_generate_attacks_is_seeded():
    """Test that the same seed reproduces the same attack sequence."""
    a = generate_attacks(AttackPolicy.CHANGING_SUPPORT_BUDGET, 6, 5, {"budget": 9}, seed=11)
    b = generate_attacks(AttackPolicy.CHANGING_SUPPORT_BUDGET, 6, 5, {"budget": 9}, seed=11)

    assert np.array_equal(a.vectors, b.vectors), "Seeded draws should match"


def test_code_from_matrix_block_layout():
    """Test that stacked_rows addresses block t of Phi."""
    phi = np.arange(12, dtype=float).reshape(6, 2) + np.eye(6, 2)
    code = ObservabilityCode.from_matrix(phi, 3)

    assert code.p == 2
    assert np.array_equal(code.phi[code.stacked_rows(1)], phi[2:4])


def test_system_json_roundtrip(tmp_path):
    """Test that a system written as JSON loads back with the same matrices."""
    sys = LtiSystem(np.array([[0.5, 0.1], [0.0, 0.7]]), np.array([[0.0], [1.0]]),
                    np.array([[1.0, 0.0], [1.0, 1.0]]), g=np.array([[0.1, -0.2]]))
    path = tmp_path / "sys.json"
    path.write_text(json.dumps(system_to_dict(sys)))

    loaded = load_system(str(path))

    assert np.allclose(loaded.a_closed, sys.a_closed), "Closed loop should survive the roundtrip"
    assert np.allclose(loaded.c, sys.c)


def test_load_system_rejects_bad_document(tmp_path):
    """Test that a document missing C is refused by schema validation."""
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"A": [[1.0]]}))

    with pytest.raises(InvalidSystem):
        load_system(str(path))


def test_trajectory_frame_columns(scalar_growth):
    """Test the per-step trajectory table layout."""
    traj = simulate(scalar_growth, np.array([1.0]), AttackSequence.zeros(4, 1), 4)
    frame = trajectory_to_frame(traj)

    assert list(frame.columns) == ["t", "x_1", "y_1", "e_1"], f"Columns {list(frame.columns)}"
    assert len(frame) == 4


def test_export_trajectory_csv(scalar_growth, tmp_path):
    """
    Test the CSV export of a trajectory built from explicit attack vectors.

    This test verifies that:
    - the attack column reproduces the injected vectors
    - the corrupted output is the clean output plus the attack
    """
    attacks = AttackSequence.from_vectors([[0.0], [2.0], [0.0]])
    traj = simulate(scalar_growth, np.array([1.0]), attacks, 3)

    path = export_trajectory_csv(traj, str(tmp_path / "traj.csv"))

    frame = pd.read_csv(path)
    assert frame["e_1"].tolist() == [0.0, 2.0, 0.0]
    assert np.allclose(frame["y_1"] - frame["e_1"], traj.clean_outputs[:, 0])
    assert attacks.per_step_support[1] == frozenset({0})
