"""Sigma-point filtering: weights, predict, update, and the swarm step."""

import math
import warnings

import numpy as np
import pytest

from swarmloc.errors import DegenerateGeometryError, UpdateSkippedWarning
from swarmloc.geometry import Observation, Pose2D
from swarmloc.kinematics import ControlInput
from swarmloc.ukf import (
    MeasurementBatch,
    MotionNoise,
    RobotFilter,
    SigmaPointParams,
    generate_sigma_points,
    measurement_function,
    predict,
    state_record,
    swarm_step,
    update,
)

# The characterization constants: alpha this small pushes the leading
# weights to +-1e10, so float64 limits what the weight sum can achieve.
NARROW_PARAMS = SigmaPointParams(alpha=1e-5, beta=2.0, kappa=0.0, n_state=3)
# Wide-spread parameters used where well-conditioned moments matter more
# than matching the characterization constants.
WIDE_PARAMS = SigmaPointParams(alpha=1.0, beta=2.0, kappa=0.0, n_state=3)

NO_MOTION_NOISE = MotionNoise(0.0, 0.0, 0.0)
STILL = ControlInput(0.0, 0.0, 1.0 / 30.0, 10.0)


def reconstruct_moments(points, wm, wc):
    mean = wm @ points
    residuals = points - mean
    return mean, residuals.T @ (wc[:, None] * residuals)


def exact_scan(poses, observer):
    """Noise-free (target, range, bearing) entries against true poses."""
    entries = []
    for j, pose in enumerate(poses):
        if j == observer:
            continue
        dx, dy = pose.x - poses[observer].x, pose.y - poses[observer].y
        entries.append(
            (j, math.hypot(dx, dy), math.atan2(dy, dx) - poses[observer].theta)
        )
    return tuple(entries)


def test_weights_match_scaled_formula():
    # Expected values computed with the identical float expression; the
    # library must agree bit for bit, not just approximately.
    lam = (1e-5) ** 2 * (3 + 0.0) - 3.0
    s = 3.0 + lam
    wm, wc = NARROW_PARAMS.weights()
    assert wm[0] == lam / s
    assert np.all(wm[1:] == 1.0 / (2.0 * s))
    assert wc[0] == lam / s + (1.0 - (1e-5) ** 2 + 2.0)
    assert np.all(wc[1:] == wm[1:])
    assert len(wm) == len(wc) == 7


def test_mean_weights_sum_to_one_within_scale():
    # At alpha = 1e-5 the weights are near +-1e10, so the achievable sum
    # accuracy scales with sum(|w|); the relative residual must still sit
    # at the 1e-12 level.
    for params in (NARROW_PARAMS, WIDE_PARAMS, SigmaPointParams(alpha=0.5)):
        wm, _ = params.weights()
        scale = max(1.0, float(np.sum(np.abs(wm))))
        assert abs(math.fsum(wm) - 1.0) <= 1e-12 * scale


def test_params_validation():
    with pytest.raises(ValueError):
        SigmaPointParams(alpha=0.0)
    with pytest.raises(ValueError):
        SigmaPointParams(n_state=0)
    with pytest.raises(ValueError):
        SigmaPointParams(kappa=-4.0)
    assert NARROW_PARAMS.n_points == 7


def test_sigma_points_identity_covariance():
    points, wm, _ = generate_sigma_points(np.zeros(3), np.eye(3), NARROW_PARAMS)
    assert points.shape == (7, 3)
    assert np.all(points[0] == 0.0)
    # Spread is sqrt(n + lambda) along each axis; same float formula.
    lam = (1e-5) ** 2 * (3 + 0.0) - 3.0
    spread = math.sqrt(3.0 + lam)
    assert np.allclose(np.diag(points[1:4]), spread, rtol=1e-12)
    assert np.allclose(np.diag(points[4:7]), -spread, rtol=1e-12)
    # Plus and minus points mirror exactly about a zero mean.
    assert np.all(points[1:4] == -points[4:7])


def test_sigma_points_zero_covariance():
    mean = np.array([3.0, -1.0, 0.5])
    points, _, _ = generate_sigma_points(mean, np.zeros((3, 3)), NARROW_PARAMS)
    assert np.all(points == mean)


def test_sigma_points_semidefinite_covariance():
    cov = np.diag([4.0, 0.0, 0.0])
    points, _, _ = generate_sigma_points(np.zeros(3), cov, WIDE_PARAMS)
    # Rank-one spread: only the x axis moves.
    assert np.all(points[:, 1] == 0.0)
    assert np.all(points[:, 2] == 0.0)
    assert points[1, 0] > 0.0


def test_sigma_points_reject_broken_covariance():
    with pytest.raises(ValueError):
        generate_sigma_points(np.zeros(3), np.diag([1.0, 1.0, -1e-3]), NARROW_PARAMS)
    asym = np.eye(3)
    asym[0, 1] = 1e-3
    with pytest.raises(ValueError):
        generate_sigma_points(np.zeros(3), asym, NARROW_PARAMS)


def test_unscented_round_trip_narrow_params():
    points, wm, wc = generate_sigma_points(np.zeros(3), np.eye(3), NARROW_PARAMS)
    mean, cov = reconstruct_moments(points, wm, wc)
    assert np.max(np.abs(mean)) < 1e-9
    assert np.max(np.abs(cov - np.eye(3))) < 1e-9


def test_unscented_round_trip_random_instances():
    rng = np.random.default_rng(0)
    for alpha in (0.5, 1.0):
        params = SigmaPointParams(alpha=alpha)
        for _ in range(20):
            target_mean = rng.uniform(-50.0, 50.0, 3)
            a = rng.normal(size=(3, 3))
            target_cov = a @ a.T + 0.1 * np.eye(3)
            points, wm, wc = generate_sigma_points(target_mean, target_cov, params)
            mean, cov = reconstruct_moments(points, wm, wc)
            assert np.max(np.abs(mean - target_mean)) < 1e-9
            assert np.max(np.abs(cov - target_cov)) < 1e-9


def test_filter_validation():
    with pytest.raises(ValueError):
        RobotFilter.from_pose(-1, Pose2D(0, 0), np.eye(3))
    with pytest.raises(ValueError):
        RobotFilter.from_pose(0, Pose2D(0, 0), np.diag([1.0, 1.0, -1e-3]))
    asym = np.eye(3)
    asym[0, 1] = 1e-3
    with pytest.raises(ValueError):
        RobotFilter.from_pose(0, Pose2D(0, 0), asym)
    rf = RobotFilter(0, np.array([1.0, 2.0, 3.0 * math.pi]), np.eye(3),
                     NARROW_PARAMS, MotionNoise())
    assert rf.state[2] == math.pi
    assert rf.pose == Pose2D(1, 2, math.pi)
    with pytest.raises(ValueError):
        rf.state[0] = 5.0


def test_motion_noise_matrix():
    q = MotionNoise(0.1, 0.2, 0.03).as_matrix()
    assert np.all(q == np.diag([0.1**2, 0.2**2, 0.03**2]))
    with pytest.raises(ValueError):
        MotionNoise(sigma_x=-0.1)


def test_predict_zero_motion_grows_by_q():
    q = MotionNoise(0.1, 0.1, 0.03)
    rf = RobotFilter.from_pose(0, Pose2D(0, 0, 0), np.eye(3),
                               params=NARROW_PARAMS, motion_noise=q)
    out = predict(rf, STILL)
    assert np.max(np.abs(out.state)) < 1e-9
    assert np.max(np.abs(out.covariance - rf.covariance - q.as_matrix())) < 1e-9


def test_predict_zero_motion_identity_on_mean():
    rf = RobotFilter.from_pose(0, Pose2D(5.0, -3.0, 0.4), np.diag([1.0, 2.0, 0.1]),
                               params=WIDE_PARAMS, motion_noise=NO_MOTION_NOISE)
    out = predict(rf, STILL)
    assert np.max(np.abs(out.state - rf.state)) < 1e-12
    assert np.max(np.abs(out.covariance - rf.covariance)) < 1e-12


def test_predict_forward_step():
    # 3 cm/s at 30 Hz advances 0.1 cm.  With zero covariance every sigma
    # point rides the same arc, so the unscented mean is the kinematic
    # step itself up to the tiny-alpha weight roundoff.
    ctrl = ControlInput(3.0, 3.0, 1.0 / 30.0, 10.0)
    rf = RobotFilter.from_pose(0, Pose2D(0, 0, 0), np.zeros((3, 3)),
                               params=NARROW_PARAMS, motion_noise=NO_MOTION_NOISE)
    out = predict(rf, ctrl)
    assert out.state[0] == pytest.approx(0.1, abs=1e-6)
    assert out.state[1] == pytest.approx(0.0, abs=1e-9)

    # Heading variance shifts the unscented mean by v*dt*var/2 (a real
    # second-order effect), so the exactness check uses a tiny spread.
    wide = RobotFilter.from_pose(0, Pose2D(0, 0, 0), 1e-12 * np.eye(3),
                                 params=WIDE_PARAMS, motion_noise=NO_MOTION_NOISE)
    out = predict(wide, ctrl)
    assert out.state[0] == pytest.approx(0.1, abs=1e-9)


def test_predict_matches_ode_oracle():
    from scipy.integrate import solve_ivp

    ctrl = ControlInput(0.0, 2.0, 1.0, 10.0)
    v, omega = ctrl.body_velocities()
    sol = solve_ivp(
        lambda t, s: [v * math.cos(s[2]), v * math.sin(s[2]), omega],
        (0.0, 1.0), [0.0, 0.0, 0.0], rtol=1e-10, atol=1e-12,
    )
    rf = RobotFilter.from_pose(0, Pose2D(0, 0, 0), np.zeros((3, 3)),
                               params=WIDE_PARAMS, motion_noise=NO_MOTION_NOISE)
    out = predict(rf, ctrl)
    assert np.max(np.abs(out.state - sol.y[:, -1])) < 1e-6


def test_predict_keeps_covariance_symmetric_psd():
    rng = np.random.default_rng(4)
    rf = RobotFilter.from_pose(0, Pose2D(10, 5, 2.5), np.diag([4.0, 2.0, 0.5]),
                               params=WIDE_PARAMS)
    for _ in range(50):
        ctrl = ControlInput(
            float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)), 1.0 / 30.0, 10.0
        )
        rf = predict(rf, ctrl)
        assert np.max(np.abs(rf.covariance - rf.covariance.T)) < 1e-9
        assert np.linalg.eigvalsh(rf.covariance).min() > -1e-9
        assert -math.pi < rf.state[2] <= math.pi


def test_measurement_axis_aligned():
    z = measurement_function(np.array([0.0, 0.0, 0.0]), [(1, Pose2D(10, 0))])
    assert z.tolist() == [10.0, 0.0]


def test_measurement_heading_subtraction():
    z = measurement_function(np.array([0.0, 0.0, math.pi / 2]), [(1, Pose2D(0, 10))])
    assert z[0] == 10.0
    assert z[1] == pytest.approx(0.0, abs=1e-15)


def test_measurement_pythagorean():
    z = measurement_function(np.array([3.0, 4.0, 0.0]), [(1, Pose2D(0, 0))])
    assert z[0] == 5.0
    assert z[1] == pytest.approx(math.atan2(-4.0, -3.0), abs=1e-15)


def test_measurement_stacks_landmarks_in_order():
    z = measurement_function(
        np.array([0.0, 0.0, 0.0]), [(1, Pose2D(10, 0)), (2, Pose2D(0, 20))]
    )
    assert z.tolist() == [10.0, 0.0, 20.0, pytest.approx(math.pi / 2)]


def test_measurement_rejects_degenerate():
    with pytest.raises(ValueError):
        measurement_function(np.zeros(3), [])
    with pytest.raises(DegenerateGeometryError):
        measurement_function(np.zeros(3), [(1, Pose2D(0, 0))])


def test_update_zero_covariance_is_fixed_point():
    # With no prior uncertainty the gain is zero: the posterior equals
    # the prior exactly, whatever the innovation.
    rf = RobotFilter.from_pose(0, Pose2D(0, 0, 0), np.zeros((3, 3)),
                               params=NARROW_PARAMS, motion_noise=NO_MOTION_NOISE)
    batch = MeasurementBatch(0, ((1, 10.0, 0.0),), {1: Pose2D(10, 0)})
    out = update(rf, batch, 1.0, 0.05)
    assert np.all(out.state == rf.state)
    assert np.all(out.covariance == rf.covariance)


def test_update_consistent_measurement_barely_moves():
    rf = RobotFilter.from_pose(0, Pose2D(0, 0, 0), 1e-6 * np.eye(3),
                               params=WIDE_PARAMS, motion_noise=NO_MOTION_NOISE)
    batch = MeasurementBatch(0, ((1, 10.0, 0.0),), {1: Pose2D(10, 0)})
    out = update(rf, batch, 1.0, 0.05)
    assert np.max(np.abs(out.state - rf.state)) < 1e-9


def test_update_contracts_position_uncertainty():
    rf = RobotFilter.from_pose(0, Pose2D(0, 0, 0), np.diag([100.0, 100.0, 0.25]),
                               params=NARROW_PARAMS, motion_noise=NO_MOTION_NOISE)
    batch = MeasurementBatch(0, ((1, 10.0, 0.0),), {1: Pose2D(10, 0)})
    spread = math.sqrt(rf.covariance[0, 0] + rf.covariance[1, 1])
    for _ in range(50):
        rf = update(rf, batch, 1.0, 0.05)
        new_spread = math.sqrt(rf.covariance[0, 0] + rf.covariance[1, 1])
        assert new_spread < spread
        spread = new_spread
    assert spread < 1.0


def test_update_wraps_bearing_innovation():
    # Measured 359 deg against a predicted 1 deg must act like a -2 deg
    # innovation; an unwrapped +358 deg would hurl the state far away.
    landmark = Pose2D(10.0 * math.cos(math.radians(1.0)),
                      10.0 * math.sin(math.radians(1.0)))
    rf = RobotFilter.from_pose(0, Pose2D(0, 0, 0), np.diag([1.0, 1.0, 0.01]),
                               params=WIDE_PARAMS, motion_noise=NO_MOTION_NOISE)
    batch = MeasurementBatch(0, ((1, 10.0, math.radians(359.0)),), {1: landmark})
    out = update(rf, batch, 1.0, 0.05)
    assert np.linalg.norm(out.state[:2] - rf.state[:2]) < 1.0
    assert abs(out.state[2] - rf.state[2]) < 0.1


def test_update_order_invariant_within_batch():
    rf = RobotFilter.from_pose(0, Pose2D(0, 0, 0.2), np.diag([4.0, 4.0, 0.1]),
                               params=WIDE_PARAMS, motion_noise=NO_MOTION_NOISE)
    landmarks = {1: Pose2D(30, 5), 2: Pose2D(-10, 25), 3: Pose2D(15, -20)}
    entries = tuple(
        (t, math.hypot(p.x, p.y) + 0.5, math.atan2(p.y, p.x) - 0.2 + 0.01)
        for t, p in landmarks.items()
    )
    forward = update(rf, MeasurementBatch(0, entries, landmarks), 1.0, 0.05)
    backward = update(rf, MeasurementBatch(0, entries[::-1], landmarks), 1.0, 0.05)
    assert np.max(np.abs(forward.state - backward.state)) < 1e-9
    assert np.max(np.abs(forward.covariance - backward.covariance)) < 1e-9


def test_update_skips_on_singular_innovation():
    # Zero prior covariance and zero sensor noise leave nothing to invert.
    rf = RobotFilter.from_pose(0, Pose2D(0, 0, 0), np.zeros((3, 3)),
                               params=WIDE_PARAMS, motion_noise=NO_MOTION_NOISE)
    batch = MeasurementBatch(0, ((1, 10.0, 0.0),), {1: Pose2D(10, 0)})
    with pytest.warns(UpdateSkippedWarning):
        out = update(rf, batch, 0.0, 0.0)
    assert out is rf


def test_update_rejects_mismatched_observer():
    rf = RobotFilter.from_pose(0, Pose2D(0, 0, 0), np.eye(3))
    batch = MeasurementBatch(1, ((2, 10.0, 0.0),), {2: Pose2D(10, 0)})
    with pytest.raises(ValueError):
        update(rf, batch, 1.0, 0.05)


def test_update_keeps_covariance_symmetric_psd():
    rng = np.random.default_rng(8)
    rf = RobotFilter.from_pose(0, Pose2D(0, 0, 0), np.diag([25.0, 25.0, 0.3]),
                               params=WIDE_PARAMS, motion_noise=NO_MOTION_NOISE)
    landmarks = {1: Pose2D(30, 5), 2: Pose2D(-10, 25)}
    for _ in range(30):
        entries = tuple(
            (t, math.hypot(p.x, p.y) + float(rng.normal(0, 2.0)),
             math.atan2(p.y, p.x) + float(rng.normal(0, 0.05)))
            for t, p in landmarks.items()
        )
        rf = update(rf, MeasurementBatch(0, entries, landmarks), 2.0, 0.05)
        assert np.max(np.abs(rf.covariance - rf.covariance.T)) < 1e-9
        assert np.linalg.eigvalsh(rf.covariance).min() > -1e-9
        assert -math.pi < rf.state[2] <= math.pi


def test_measurement_batch_validation():
    with pytest.raises(ValueError):
        MeasurementBatch(0, (), {})
    with pytest.raises(ValueError):
        MeasurementBatch(0, ((0, 10.0, 0.0),), {0: Pose2D(1, 1)})
    with pytest.raises(ValueError):
        MeasurementBatch(0, ((1, 10.0, 0.0),), {})
    with pytest.raises(ValueError):
        MeasurementBatch.from_observations(
            [Observation(0, 1, 10.0, 0.0), Observation(2, 1, 10.0, 0.0)],
            {1: Pose2D(10, 0)},
        )
    batch = MeasurementBatch.from_observations(
        [Observation(0, 1, 10.0, 0.25)], {1: Pose2D(10, 0)}
    )
    assert batch.observer_id == 0
    assert batch.entries == ((1, 10.0, 0.25),)


def make_static_swarm(n, params, cov_scale=1e-10):
    truth = [
        Pose2D(
            40.0 * math.cos(2.0 * math.pi * i / n),
            40.0 * math.sin(2.0 * math.pi * i / n),
            0.3 * i,
        )
        for i in range(n)
    ]
    filters = [
        RobotFilter.from_pose(i, truth[i], cov_scale * np.eye(3),
                              params=params, motion_noise=NO_MOTION_NOISE)
        for i in range(n)
    ]
    return truth, filters


def test_swarm_step_predict_only_accumulates_q():
    q = MotionNoise(0.1, 0.1, 0.03)
    filters = [
        RobotFilter.from_pose(i, Pose2D(i * 10.0, 0, 0), np.zeros((3, 3)),
                              params=WIDE_PARAMS, motion_noise=q)
        for i in range(3)
    ]
    controls = [STILL] * 3
    for step in range(1, 6):
        filters = swarm_step(filters, controls, [None] * 3, 15.0, 0.15)
        for rf in filters:
            assert np.max(np.abs(rf.covariance - step * q.as_matrix())) < 1e-9


def test_swarm_step_static_fixed_point():
    truth, filters = make_static_swarm(5, WIDE_PARAMS)
    controls = [STILL] * 5
    scans = [exact_scan(truth, i) for i in range(5)]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for _ in range(100):
            filters = swarm_step(filters, controls, scans, 0.1, 0.01)
    for rf, pose in zip(filters, truth):
        assert np.linalg.norm(rf.state[:2] - pose.position) < 1e-6
        assert abs(rf.state[2] - pose.theta) < 1e-6


def test_swarm_step_order_independent():
    truth, filters = make_static_swarm(4, WIDE_PARAMS, cov_scale=4.0)
    controls = [ControlInput(1.0, 2.0, 1.0 / 30.0, 10.0)] * 4
    scans = [exact_scan(truth, i) for i in range(4)]
    order = [2, 0, 3, 1]
    straight = swarm_step(filters, controls, scans, 1.0, 0.05)
    permuted = swarm_step(
        [filters[i] for i in order],
        [controls[i] for i in order],
        [scans[i] for i in order],
        1.0,
        0.05,
    )
    by_id = {rf.robot_id: rf for rf in permuted}
    for rf in straight:
        other = by_id[rf.robot_id]
        assert np.max(np.abs(rf.state - other.state)) < 1e-12
        assert np.max(np.abs(rf.covariance - other.covariance)) < 1e-12


def test_swarm_step_accepts_observation_scans():
    truth, filters = make_static_swarm(3, WIDE_PARAMS, cov_scale=1.0)
    controls = [STILL] * 3
    scans = [
        [Observation(0, 1, 40.0, 0.5)],
        None,
        [(0, 40.0, -0.5), (1, 30.0, 0.2)],
    ]
    out = swarm_step(filters, controls, scans, 2.0, 0.1)
    assert len(out) == 3
    # The no-scan robot ran predict only: its covariance is untouched
    # beyond the unscented recomposition.
    assert np.max(np.abs(out[1].covariance - filters[1].covariance)) < 1e-9


def test_swarm_step_validates_inputs():
    truth, filters = make_static_swarm(3, WIDE_PARAMS)
    controls = [STILL] * 3
    with pytest.raises(ValueError):
        swarm_step(filters, controls[:2], [None] * 3, 1.0, 0.05)
    with pytest.raises(ValueError):
        swarm_step(filters, controls, [None] * 2, 1.0, 0.05)
    with pytest.raises(ValueError):
        swarm_step(filters, controls, [[(9, 10.0, 0.0)], None, None], 1.0, 0.05)
    dup = [filters[0], filters[0], filters[2]]
    with pytest.raises(ValueError):
        swarm_step(dup, controls, [None] * 3, 1.0, 0.05)
    wrong_observer = [Observation(1, 2, 10.0, 0.0)]
    with pytest.raises(ValueError):
        swarm_step(filters, controls, [wrong_observer, None, None], 1.0, 0.05)


def test_state_record_layout():
    rf = RobotFilter.from_pose(3, Pose2D(1.5, -2.0, 0.25), np.diag([1.0, 2.0, 0.5]))
    record = state_record(2.5, rf)
    assert record["t"] == 2.5
    assert record["robot_id"] == 3
    assert (record["x"], record["y"], record["theta"]) == (1.5, -2.0, 0.25)
    assert record["cov"] == [1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.5]
