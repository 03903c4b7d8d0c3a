"""
Tests for the Kalman filter and the secure-estimator + Kalman pipeline.
"""
import math

import numpy as np
import pytest

from secest.core.errors import SingularInnovation
from secest.core.kalman import (
    CombinedEstimator,
    KalmanFilter,
    combined_step,
    initial_state,
    kf_step,
    run_filters,
)
from secest.core.model import AttackPolicy, AttackSequence, LtiSystem, generate_attacks, simulate

RAMP_WINDOW = 7
RAMP_STEPS = 30


def _with_noise(sys, q=1e-4, r=1e-4):
    return sys.with_noise(q * np.eye(sys.n), r * np.eye(sys.p))


def _rmse(estimates, states, start):
    return float(np.sqrt(np.mean((estimates[start:] - states[start:]) ** 2)))


def test_accurate_sensors_pin_the_mean():
    """Test that a nearly noiseless full-state measurement sets the mean to y."""
    sys = LtiSystem(np.eye(2), np.zeros((2, 1)), np.eye(2), meas_noise_cov=1e-10 * np.eye(2))

    state = kf_step(sys, initial_state(sys), None, np.array([3.0, -1.0]))

    assert np.allclose(state.mean, [3.0, -1.0], atol=1e-8), f"Mean {state.mean}"
    assert state.t == 1


def test_scalar_steady_state_variance():
    """Test a = c = q = r = 1: the posterior variance converges to (sqrt(5) - 1) / 2."""
    sys = LtiSystem(np.eye(1), np.zeros((1, 1)), np.eye(1), proc_noise_cov=np.eye(1),
                    meas_noise_cov=np.eye(1))
    kf = KalmanFilter(sys)
    for _ in range(200):
        kf.step(None, np.zeros(1))

    assert kf.cov[0, 0] == pytest.approx((math.sqrt(5.0) - 1.0) / 2.0, abs=1e-10)


def test_infinite_measurement_noise_is_pure_prediction():
    """Test that an infinite R inflation leaves only the model prediction A^k x0."""
    sys = LtiSystem(np.diag([0.5, 0.9]), np.zeros((2, 1)), np.eye(2), meas_noise_cov=np.eye(2))
    kf = KalmanFilter(sys, x0=np.array([1.0, 2.0]), r_inflation=float("inf"))
    for _ in range(4):
        kf.step(None, np.array([100.0, -100.0]))

    assert np.allclose(kf.mean, [0.5 ** 3, 2.0 * 0.9 ** 3]), f"Mean {kf.mean}"


def test_missing_measurement_skips_update():
    """Test that y = None only propagates the prior."""
    sys = LtiSystem(np.array([[2.0]]), np.zeros((1, 1)), np.eye(1), meas_noise_cov=np.eye(1))
    state = kf_step(sys, initial_state(sys, x0=np.array([1.0])), None, None)
    state = kf_step(sys, state, None, None)

    assert state.mean[0] == pytest.approx(2.0)
    assert state.cov[0, 0] == pytest.approx(40.0)


def test_singular_innovation():
    """Test that C P C' + R = 0 raises SingularInnovation."""
    sys = LtiSystem(np.eye(1), np.zeros((1, 1)), np.eye(1))

    with pytest.raises(SingularInnovation):
        kf_step(sys, initial_state(sys, p0=np.zeros((1, 1))), None, np.array([1.0]))


def test_covariance_stays_symmetric_psd(designed_system, rng):
    """Test the Joseph-form update over a noisy run."""
    sys = _with_noise(designed_system, q=1e-2, r=1e-1)
    kf = KalmanFilter(sys)
    for _ in range(50):
        kf.step(None, rng.standard_normal(sys.p))
        assert np.allclose(kf.cov, kf.cov.T), "Covariance lost symmetry"
        assert np.min(np.linalg.eigvalsh(kf.cov)) >= -1e-12, "Covariance is not PSD"


def test_combined_equals_filter_during_warmup_and_without_attacks(designed_system, rng):
    """
    Test the combined estimator on clean data.

    This test verifies that:
    - before the window fills the output is exactly the filter mean
    - afterwards the attack estimate vanishes and the outputs still agree
    """
    T, steps = 4, 12
    traj = simulate(designed_system, rng.standard_normal(3), AttackSequence.zeros(steps, designed_system.p), steps)
    filt_sys = _with_noise(designed_system)
    kf = KalmanFilter(filt_sys)
    combined = CombinedEstimator(filt_sys, T)

    for t in range(steps):
        kf.step(None, traj.corrupted_outputs[t])
        _, x_hat, e_hat = combined_step(combined, filt_sys, None, traj.corrupted_outputs[t])
        if t < T:
            assert np.array_equal(x_hat, kf.mean), f"Warm-up output differs at t={t}"
            assert combined.last_secure_state is None
        assert np.allclose(e_hat, 0.0, atol=1e-7), f"Spurious attack estimate at t={t}"
        assert np.allclose(x_hat, kf.mean, atol=1e-6), f"Outputs diverge at t={t}"
    assert combined.decode_failures == 0


def test_combined_beats_filter_under_ramp_attack(rng):
    """
    Test a ramp on sensor 0 plus one roving sensor per step.

    This test verifies that:
    - the secure decoder alone tracks the true state
    - the combined estimator has lower RMSE than the plain filter
    """
    plant = LtiSystem(np.diag([0.8, 0.9, 0.95]), np.zeros((3, 1)), rng.standard_normal((10, 3)))
    attacks = generate_attacks(AttackPolicy.RAMP_PLUS_ROVING_NOISE, plant.p, RAMP_STEPS,
                               {"slope": 1.0, "roving_std": 1.0}, seed=4)
    traj = simulate(plant, rng.standard_normal(3), attacks, RAMP_STEPS)
    filt_sys = _with_noise(plant)

    out = run_filters(filt_sys, traj.corrupted_outputs, None, RAMP_WINDOW)

    assert np.allclose(out["se"][RAMP_WINDOW:], traj.states[RAMP_WINDOW:], atol=1e-6), \
        "Secure estimate should equal the true state once the window has filled"
    assert np.array_equal(out["se"][:RAMP_WINDOW], out["kf"][:RAMP_WINDOW]), \
        "Secure estimate should report the filter mean during warm-up"
    rmse_kf = _rmse(out["kf"], traj.states, RAMP_WINDOW)
    rmse_combined = _rmse(out["se+kf"], traj.states, RAMP_WINDOW)
    assert rmse_combined < rmse_kf, f"Combined RMSE {rmse_combined:.4f} not below KF RMSE {rmse_kf:.4f}"


def test_run_filters_output_layout(designed_system):
    """Test the result keys and shapes of run_filters."""
    sys = _with_noise(designed_system)
    y = np.zeros((6, sys.p))

    out = run_filters(sys, y, None, 3, methods=("kf", "se+kf"))

    assert set(out) == {"kf", "se+kf", "e_hat"}
    assert out["kf"].shape == (6, sys.n) and out["e_hat"].shape == (6, sys.p)


def test_run_filters_rejects_unknown_method(designed_system):
    """Test that an unknown estimator name raises ValueError."""
    with pytest.raises(ValueError):
        run_filters(_with_noise(designed_system), np.zeros((3, 6)), None, 2, methods=("ukf",))


def test_combined_estimator_rejects_bad_window(designed_system):
    """Test that a zero window is refused."""
    with pytest.raises(ValueError):
        CombinedEstimator(designed_system, 0)


def test_open_loop_decoder_follows_applied_inputs(rng):
    """
    Test the open-loop pipeline on a plant driven by arbitrary known inputs.

    This test verifies that:
    - the applied input is taken as the decoder's known input
    - the secure state equals the true state once the window has filled,
      even with one corrupted measurement inside the window
    """
    T, steps = 4, 12
    plant = LtiSystem(np.diag([0.9, 1.0, 1.05]), rng.standard_normal((3, 1)),
                      rng.standard_normal((6, 3)), g=rng.standard_normal((1, 3)))
    filt_sys = _with_noise(plant)
    combined = CombinedEstimator(filt_sys, T, open_loop=True)
    inputs = rng.standard_normal((steps, 1))
    attacks = np.zeros((steps, plant.p))
    attacks[6, 2] = 5.0

    x = rng.standard_normal(3)
    u_prev = None
    for t in range(steps):
        combined.step(u_prev, plant.c @ x + attacks[t])
        if t >= T:
            assert np.allclose(combined.last_secure_state, x, atol=1e-6), f"Secure state off at t={t}"
        x = plant.a_open @ x + plant.b @ inputs[t]
        u_prev = inputs[t]
    assert combined.decode_failures == 0
