import math

import numpy as np
import pytest

from tandemtrolley.estimator import (
    GATE_CHI2_999,
    H_FOLLOWER,
    H_LEADER,
    H_RELATIVE,
    BeliefState,
    FilterStats,
    Measurement,
    MeasurementSource,
    TrialNoise,
    nees,
    predict,
    run_consistency_trial,
    update,
)
from tandemtrolley.geometry import AssemblyState, ControlInput, Pose2, wrap_angle

LEADER = MeasurementSource.LEADER_POSE
FOLLOWER = MeasurementSource.FOLLOWER_POSE
RELATIVE = MeasurementSource.RELATIVE_POSE


def make_belief(mean=None, cov=None, stamp=0.0):
    if mean is None:
        mean = AssemblyState(Pose2(0.67, 0, 0), Pose2(-0.67, 0, 0))
    if cov is None:
        cov = 0.04 * np.eye(6)
    return BeliefState(mean, cov, stamp)


def test_h_matrices():
    x = np.arange(6.0)
    np.testing.assert_array_equal(H_LEADER @ x, x[:3])
    np.testing.assert_array_equal(H_FOLLOWER @ x, x[3:])
    np.testing.assert_array_equal(H_RELATIVE @ x, x[:3] - x[3:])


def test_predict_identity_with_zero_input_and_noise():
    b = make_belief()
    out = predict(b, ControlInput(0, 0, 0, 0), 0.1, np.zeros((6, 6)))
    assert out.mean == b.mean
    np.testing.assert_allclose(out.covariance, b.covariance)
    assert out.stamp == pytest.approx(0.1)


def test_predict_additive_process_noise():
    b = make_belief()
    v = 0.01 * np.eye(6)
    out = predict(b, ControlInput(0, 0, 0, 0), 0.1, v)
    assert out.mean == b.mean
    np.testing.assert_allclose(out.covariance, b.covariance + v)


def test_predict_heading_coupling():
    # vL = 1, thetaL = 0: the x-position variance picks up heading uncertainty
    b = make_belief(cov=np.eye(6))
    out = predict(b, ControlInput(1, 0, 0, 0), 0.1, np.zeros((6, 6)))
    f = np.eye(6)
    f[0, 2] = -0.1 * math.sin(0.0)
    f[1, 2] = 0.1 * math.cos(0.0)
    np.testing.assert_allclose(out.covariance, f @ np.eye(6) @ f.T, atol=1e-12)
    assert out.covariance[1, 2] == pytest.approx(0.1)


def test_update_perfect_measurement_dominates():
    b = make_belief()
    z = np.array([0.8, 0.05, 0.1])
    out = update(b, Measurement(LEADER, z, 1e-12 * np.eye(3), 0.0))
    np.testing.assert_allclose(out.mean.leader.as_array(), z, atol=1e-6)


def test_update_zero_innovation_keeps_mean_shrinks_relative_cov():
    b = make_belief()
    z = H_RELATIVE @ b.mean.as_array()
    out = update(b, Measurement(RELATIVE, z, 0.01 * np.eye(3), 0.0))
    np.testing.assert_allclose(out.mean.as_array(), b.mean.as_array(), atol=1e-12)
    before = np.trace(H_RELATIVE @ b.covariance @ H_RELATIVE.T)
    after = np.trace(H_RELATIVE @ out.covariance @ H_RELATIVE.T)
    assert after < before


def test_update_wraps_innovation_across_pi():
    mean = AssemblyState(Pose2(0.67, 0, math.pi - 0.05), Pose2(-0.67, 0, 0))
    b = make_belief(mean=mean)
    z = np.array([0.67, 0.0, -math.pi + 0.05])
    out = update(b, Measurement(LEADER, z, 0.01 * np.eye(3), 0.0))
    # innovation must be +0.1, so the posterior heading advances toward +pi
    shift = wrap_angle(out.mean.leader.theta - (math.pi - 0.05))
    assert 0.0 < shift < 0.1


def test_update_rejects_non_psd_noise():
    b = make_belief()
    bad = np.diag([1.0, -1.0, 1.0])
    with pytest.raises(ValueError):
        update(b, Measurement(LEADER, np.zeros(3), bad, 0.0))
    asym = np.array([[1.0, 0.5, 0], [0, 1, 0], [0, 0, 1]])
    with pytest.raises(ValueError):
        update(b, Measurement(LEADER, np.zeros(3), asym, 0.0))


def test_update_gates_outliers():
    b = make_belief()
    stats = FilterStats()
    z = b.mean.leader.as_array() + np.array([50.0, 0.0, 0.0])
    out = update(b, Measurement(LEADER, z, 0.01 * np.eye(3), 0.0), stats=stats)
    assert out.mean == b.mean
    np.testing.assert_array_equal(out.covariance, b.covariance)
    assert stats.gated == 1


def test_update_drops_stale_measurements():
    b = make_belief(stamp=5.0)
    stats = FilterStats()
    z = b.mean.leader.as_array()
    out = update(b, Measurement(LEADER, z, 0.01 * np.eye(3), 4.0), max_lag=0.1, stats=stats)
    assert out is b
    assert stats.dropped_late == 1
    # within one control period is still accepted
    out = update(b, Measurement(LEADER, z, 0.01 * np.eye(3), 4.95), max_lag=0.1, stats=stats)
    assert stats.dropped_late == 1


def test_update_infinite_noise_is_noop():
    b = make_belief()
    z = b.mean.leader.as_array() + 0.1
    out = update(b, Measurement(LEADER, z, 1e12 * np.eye(3), 0.0))
    assert np.abs(out.mean.as_array() - b.mean.as_array()).max() < 1e-6


def test_update_order_insensitive_at_shared_stamp():
    rng = np.random.default_rng(41)
    for _ in range(20):
        cov = rng.uniform(-0.05, 0.05, (6, 6))
        cov = cov @ cov.T + 0.05 * np.eye(6)
        b = make_belief(cov=cov)
        zl = b.mean.leader.as_array() + rng.normal(0, 0.05, 3)
        zf = b.mean.follower.as_array() + rng.normal(0, 0.05, 3)
        ml = Measurement(LEADER, zl, 0.01 * np.eye(3), 0.0)
        mf = Measurement(FOLLOWER, zf, 0.01 * np.eye(3), 0.0)
        a = update(update(b, ml), mf)
        c = update(update(b, mf), ml)
        np.testing.assert_allclose(a.mean.as_array(), c.mean.as_array(), atol=1e-9)
        np.testing.assert_allclose(a.covariance, c.covariance, atol=1e-9)


def test_covariance_stays_psd_under_interleavings():
    rng = np.random.default_rng(42)
    b = make_belief()
    noise = TrialNoise()
    for _ in range(1500):
        op = rng.integers(0, 4)
        if op == 0:
            u = ControlInput(*rng.uniform(-0.7, 0.7, 4))
            b = predict(b, u, 0.1, noise.process_cov())
        else:
            source = list(MeasurementSource)[op - 1]
            h = {LEADER: H_LEADER, FOLLOWER: H_FOLLOWER, RELATIVE: H_RELATIVE}[source]
            z = h @ b.mean.as_array() + rng.normal(0, 0.05, 3)
            b = update(b, Measurement(source, z, noise.cov_for(source), b.stamp))
        assert np.abs(b.covariance - b.covariance.T).max() <= 1e-12
        np.linalg.cholesky(b.covariance + 1e-12 * np.eye(6))


def test_belief_validation():
    with pytest.raises(ValueError):
        make_belief(cov=np.diag([1, 1, 1, 1, 1, -1.0]))
    asym = np.eye(6)
    asym[0, 1] = 0.5
    with pytest.raises(ValueError):
        make_belief(cov=asym)


def test_zero_noise_trial_is_exact():
    silent = TrialNoise(0, 0, 0, 0, 0, 0)
    series = run_consistency_trial(seed=0, steps=50, noise=silent, initial_sigma=0.0)
    np.testing.assert_array_equal(series, np.zeros(50))


def test_consistency_trial_quick_band():
    # small pilot version of the Monte Carlo acceptance criterion
    runs = [run_consistency_trial(seed=s, steps=150).mean() for s in range(30)]
    avg = float(np.mean(runs))
    assert 4.5 < avg < 7.5


def test_relative_updates_shrink_relative_covariance():
    from tandemtrolley.estimator import _due
    from tandemtrolley.kinematics import step_pair_array

    def final_relative_trace(rel_rate, seed=7, steps=120):
        rng = np.random.default_rng(seed)
        noise = TrialNoise()
        v_cov = noise.process_cov()
        v_sqrt = np.sqrt(np.diag(v_cov))
        truth = np.array([0.67, 0, 0, -0.67, 0, 0])
        b = BeliefState(AssemblyState.from_array(truth), 0.05**2 * np.eye(6), 0.0)
        rates = {LEADER: 10.0, FOLLOWER: 10.0, RELATIVE: rel_rate}
        for k in range(steps):
            t = (k + 1) * 0.1
            u = ControlInput(0.3, 0.1 * math.sin(0.1 * k), 0.3, 0.1 * math.sin(0.1 * k))
            truth = step_pair_array(truth, u.as_array(), 0.1) + v_sqrt * rng.standard_normal(6)
            b = predict(b, u, 0.1, v_cov)
            for source, h in ((LEADER, H_LEADER), (FOLLOWER, H_FOLLOWER), (RELATIVE, H_RELATIVE)):
                if _due(t, rates[source]):
                    w_cov = noise.cov_for(source)
                    z = h @ truth + np.sqrt(np.diag(w_cov)) * rng.standard_normal(3)
                    b = update(b, Measurement(source, z, w_cov, t))
        rel_pos = (H_RELATIVE @ b.covariance @ H_RELATIVE.T)[:2, :2]
        return float(np.trace(rel_pos))

    assert final_relative_trace(0.0) > final_relative_trace(10.0)


def test_trial_input_validation():
    with pytest.raises(ValueError):
        run_consistency_trial(seed=0, steps=0)


def test_gate_constant_sane():
    assert GATE_CHI2_999 == pytest.approx(16.266, abs=1e-3)


def test_nees_zero_error():
    b = make_belief()
    assert nees(b, b.mean.as_array()) == 0.0
