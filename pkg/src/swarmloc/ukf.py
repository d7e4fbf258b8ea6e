"""Per-robot unscented Kalman filtering.

Each robot runs an independent 3-state filter ([x, y, theta]) with a
differential-drive prediction step and a range/bearing update that treats
the other robots' current estimated poses as landmarks.  Functions return
new :class:`RobotFilter` values instead of mutating.

The scaled sigma-point construction must tolerate the characterization
constants alpha = 1e-5, kappa = 0, n = 3, which give lambda close to -3
and mean/covariance weights near +-1e10.  Nothing here assumes positive
weights, and weighted sums are arranged so the huge leading weights cancel
structurally.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DegenerateGeometryError, UpdateSkippedWarning
from .geometry import Observation, Pose2D, normalize_angle, wrap_angles
from .kinematics import ControlInput, propagate
from .validation import (
    as_float_array,
    require_covariance,
    require_non_negative,
    require_positive,
)

# Landmarks closer than this to the state are rejected: bearing undefined.
_COINCIDENT_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class MotionNoise:
    """Per-predict-step additive process noise std-devs.

    Defaults are the characterized dead-reckoning errors at the 30 Hz
    predict rate.  Zeros are allowed so tests can run noise-free.
    """

    sigma_x: float = 0.1
    sigma_y: float = 0.1
    sigma_theta: float = 0.03

    def __post_init__(self):
        object.__setattr__(self, "sigma_x", require_non_negative("sigma_x", self.sigma_x))
        object.__setattr__(self, "sigma_y", require_non_negative("sigma_y", self.sigma_y))
        object.__setattr__(self, "sigma_theta", require_non_negative("sigma_theta", self.sigma_theta))

    def as_matrix(self) -> np.ndarray:
        return np.diag([self.sigma_x**2, self.sigma_y**2, self.sigma_theta**2])


@dataclass(frozen=True, slots=True)
class SigmaPointParams:
    """Scaled sigma-point constants.  Defaults follow the characterization
    choices alpha = 1e-5, beta = 2, kappa = 0 for a 3-state filter."""

    alpha: float = 1e-5
    beta: float = 2.0
    kappa: float = 0.0
    n_state: int = 3

    def __post_init__(self):
        object.__setattr__(self, "alpha", require_positive("alpha", self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "kappa", float(self.kappa))
        n_state = int(self.n_state)
        if n_state < 1:
            raise ValueError(f"n_state must be at least 1, got {self.n_state!r}")
        object.__setattr__(self, "n_state", n_state)
        if self.scaled_dim <= 0.0:
            raise ValueError(
                f"n_state + lambda = {self.scaled_dim!r} must be positive; "
                f"check alpha/kappa"
            )

    @property
    def lambda_(self) -> float:
        n = self.n_state
        return self.alpha**2 * (n + self.kappa) - n

    @property
    def scaled_dim(self) -> float:
        """n + lambda, the sigma-point spread scale."""
        return self.n_state + self.lambda_

    @property
    def n_points(self) -> int:
        return 2 * self.n_state + 1

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance weight vectors, length ``n_points``.

        Mean weights sum to 1 up to roundoff in the weights themselves,
        which for tiny alpha are near +-1e10; the achievable float64
        accuracy of the sum scales with sum(|w|), not with 1.
        """
        s = self.scaled_dim
        wm = np.full(self.n_points, 1.0 / (2.0 * s))
        wc = wm.copy()
        wm[0] = self.lambda_ / s
        wc[0] = wm[0] + (1.0 - self.alpha**2 + self.beta)
        return wm, wc


def generate_sigma_points(
    mean, covariance, params: SigmaPointParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scaled sigma points for ``mean``/``covariance``.

    Returns ``(points, mean_weights, cov_weights)`` with ``points`` of
    shape (2n+1, n): the mean, then mean plus each column of the symmetric
    square root of ``(n + lambda) * covariance``, then mean minus each.
    The square root uses a symmetric eigendecomposition with negative
    eigenvalues clamped to zero, so exactly semidefinite covariances work;
    eigenvalues below -1e-9 are rejected.
    """
    n = params.n_state
    mean = as_float_array("mean", mean, shape=(n,))
    cov = require_covariance("covariance", covariance, size=n, eig_floor=-1e-9)
    eigvals, eigvecs = np.linalg.eigh(params.scaled_dim * cov)
    eigvals = np.clip(eigvals, 0.0, None)
    sqrt_cov = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    points = np.empty((params.n_points, n))
    points[0] = mean
    points[1 : n + 1] = mean + sqrt_cov.T
    points[n + 1 :] = mean - sqrt_cov.T
    wm, wc = params.weights()
    return points, wm, wc


def _unscented_moments(
    points: np.ndarray,
    wm: np.ndarray,
    wc: np.ndarray,
    angle_components: Sequence[int],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weighted mean/covariance of transformed sigma points.

    Angle components get a circular mean (atan2 of weighted sines and
    cosines) and wrapped residuals, so values straddling the +-pi cut
    average correctly.  Returns (mean, covariance, residuals).
    """
    mean = wm @ points
    for j in angle_components:
        col = points[:, j]
        mean[j] = math.atan2(float(wm @ np.sin(col)), float(wm @ np.cos(col)))
    residuals = points - mean
    for j in angle_components:
        residuals[:, j] = wrap_angles(residuals[:, j])
    cov = residuals.T @ (wc[:, None] * residuals)
    return mean, cov, residuals


def _clamped_spsd(matrix: np.ndarray, context: str) -> np.ndarray:
    """Symmetrize and clamp roundoff-negative eigenvalues to zero.

    Eigenvalues below -1e-9 indicate a genuinely broken covariance and
    raise LinAlgError for the caller to handle.
    """
    sym = 0.5 * (matrix + matrix.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals[0] < -1e-9:
        raise LinAlgError(f"{context}: covariance eigenvalue {eigvals[0]:.3e}")
    if eigvals[0] < 0.0:
        eigvals = np.clip(eigvals, 0.0, None)
        sym = (eigvecs * eigvals) @ eigvecs.T
        sym = 0.5 * (sym + sym.T)
    return sym


@dataclass(frozen=True, slots=True)
class RobotFilter:
    """Immutable filter state for one robot.

    ``state`` is the mean ``[x, y, theta]`` with theta normalized;
    ``covariance`` is 3x3, symmetric within 1e-9, eigenvalues >= -1e-12.
    """

    robot_id: int
    state: np.ndarray
    covariance: np.ndarray
    params: SigmaPointParams
    motion_noise: MotionNoise

    def __post_init__(self):
        robot_id = int(self.robot_id)
        if robot_id < 0:
            raise ValueError(f"robot_id must be non-negative, got {self.robot_id!r}")
        object.__setattr__(self, "robot_id", robot_id)
        state = as_float_array("state", self.state, shape=(3,)).copy()
        state[2] = normalize_angle(state[2])
        state.setflags(write=False)
        object.__setattr__(self, "state", state)
        cov = require_covariance("covariance", self.covariance, size=3, eig_floor=-1e-12)
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)
        if not isinstance(self.params, SigmaPointParams):
            raise TypeError(f"params must be SigmaPointParams, got {type(self.params).__name__}")
        if not isinstance(self.motion_noise, MotionNoise):
            raise TypeError(
                f"motion_noise must be MotionNoise, got {type(self.motion_noise).__name__}"
            )

    @property
    def pose(self) -> Pose2D:
        return Pose2D(float(self.state[0]), float(self.state[1]), float(self.state[2]))

    @classmethod
    def from_pose(
        cls,
        robot_id: int,
        pose: Pose2D,
        covariance,
        params: SigmaPointParams | None = None,
        motion_noise: MotionNoise | None = None,
    ) -> "RobotFilter":
        return cls(
            robot_id,
            pose.as_array(),
            covariance,
            params or SigmaPointParams(),
            motion_noise or MotionNoise(),
        )


def predict(rf: RobotFilter, control: ControlInput) -> RobotFilter:
    """Propagate the filter through one differential-drive control step.

    Sigma points are pushed through the same kinematics used for ground
    truth, recomposed with an angle-aware mean, and the process noise
    ``diag(sigma_x^2, sigma_y^2, sigma_theta^2)`` is added.
    """
    points, wm, wc = generate_sigma_points(rf.state, rf.covariance, rf.params)
    moved = propagate(points, control)
    mean, cov, _ = _unscented_moments(moved, wm, wc, angle_components=(2,))
    cov = cov + rf.motion_noise.as_matrix()
    cov = _clamped_spsd(cov, "predict")
    return replace(rf, state=mean, covariance=cov)


def measurement_function(state, landmarks: Sequence[tuple[int, Pose2D]]) -> np.ndarray:
    """Predicted (range, bearing) stack for each landmark, in order.

    Bearings are ``atan2(dy, dx) - theta`` wrapped to (-pi, pi].  A
    landmark coincident with the state position is rejected.
    """
    state = as_float_array("state", state, shape=(3,))
    if not landmarks:
        raise ValueError("landmarks must be non-empty")
    out = np.empty(2 * len(landmarks))
    for j, (_, pose) in enumerate(landmarks):
        dx = pose.x - state[0]
        dy = pose.y - state[1]
        distance = math.hypot(dx, dy)
        if distance < _COINCIDENT_TOL:
            raise DegenerateGeometryError(
                f"landmark {landmarks[j][0]} coincides with the state position"
            )
        out[2 * j] = distance
        out[2 * j + 1] = normalize_angle(math.atan2(dy, dx) - state[2])
    return out


def _measure_points(points: np.ndarray, landmark_xy: np.ndarray) -> np.ndarray:
    """Vectorized measurement_function over sigma points.

    ``points`` is (S, 3), ``landmark_xy`` is (k, 2); returns (S, 2k) with
    ranges in even and bearings in odd columns.
    """
    dx = landmark_xy[None, :, 0] - points[:, None, 0]
    dy = landmark_xy[None, :, 1] - points[:, None, 1]
    ranges = np.hypot(dx, dy)
    if np.min(ranges) < _COINCIDENT_TOL:
        raise DegenerateGeometryError("a landmark coincides with a sigma point")
    bearings = wrap_angles(np.arctan2(dy, dx) - points[:, 2, None])
    out = np.empty((points.shape[0], 2 * landmark_xy.shape[0]))
    out[:, 0::2] = ranges
    out[:, 1::2] = bearings
    return out


@dataclass(frozen=True)
class MeasurementBatch:
    """One robot's sensor scan plus the landmark poses to update against.

    ``entries`` is an ordered tuple of (target_id, range_cm, bearing_rad);
    ``landmark_poses`` must supply a pose for every target.
    """

    observer_id: int
    entries: tuple[tuple[int, float, float], ...]
    landmark_poses: Mapping[int, Pose2D]

    def __post_init__(self):
        observer_id = int(self.observer_id)
        object.__setattr__(self, "observer_id", observer_id)
        entries = []
        for entry in self.entries:
            target_id, range_cm, bearing_rad = entry
            target_id = int(target_id)
            if target_id == observer_id:
                raise ValueError(f"robot {observer_id} cannot observe itself")
            range_cm = require_positive("range_cm", range_cm)
            bearing_rad = normalize_angle(bearing_rad)
            entries.append((target_id, range_cm, bearing_rad))
        if not entries:
            raise ValueError("a measurement batch needs at least one entry")
        object.__setattr__(self, "entries", tuple(entries))
        poses = dict(self.landmark_poses)
        for target_id, _, _ in entries:
            if target_id not in poses:
                raise ValueError(f"no landmark pose supplied for target {target_id}")
            if not isinstance(poses[target_id], Pose2D):
                raise TypeError(f"landmark pose for {target_id} must be Pose2D")
        object.__setattr__(self, "landmark_poses", poses)

    @classmethod
    def from_observations(
        cls,
        observations: Sequence[Observation],
        landmark_poses: Mapping[int, Pose2D],
    ) -> "MeasurementBatch":
        if not observations:
            raise ValueError("no observations to build a batch from")
        observer_id = observations[0].observer_id
        for obs in observations:
            if obs.observer_id != observer_id:
                raise ValueError(
                    f"batch mixes observers {observer_id} and {obs.observer_id}"
                )
        entries = tuple((o.target_id, o.range_cm, o.bearing_rad) for o in observations)
        return cls(observer_id, entries, landmark_poses)


def update(
    rf: RobotFilter,
    batch: MeasurementBatch,
    sigma_dist: float,
    sigma_angle: float,
) -> RobotFilter:
    """Condition the filter on one scan of range/bearing measurements.

    The measurement noise matrix is ``diag(sigma_dist^2, sigma_angle^2)``
    tiled to the batch size.  Bearing innovations use shortest-arc
    residuals.  If the innovation covariance cannot be factorized the
    update is skipped with :class:`UpdateSkippedWarning` and the filter is
    returned unchanged.
    """
    sigma_dist = require_non_negative("sigma_dist", sigma_dist)
    sigma_angle = require_non_negative("sigma_angle", sigma_angle)
    if batch.observer_id != rf.robot_id:
        raise ValueError(
            f"batch for robot {batch.observer_id} applied to filter {rf.robot_id}"
        )
    k = len(batch.entries)
    landmark_xy = np.array(
        [[batch.landmark_poses[t].x, batch.landmark_poses[t].y] for t, _, _ in batch.entries]
    )
    measured = np.empty(2 * k)
    measured[0::2] = [r for _, r, _ in batch.entries]
    measured[1::2] = [b for _, _, b in batch.entries]

    points, wm, wc = generate_sigma_points(rf.state, rf.covariance, rf.params)
    transformed = _measure_points(points, landmark_xy)
    angle_components = tuple(range(1, 2 * k, 2))
    z_mean, z_cov, z_res = _unscented_moments(transformed, wm, wc, angle_components)

    noise = np.zeros((2 * k, 2 * k))
    idx = np.arange(2 * k)
    noise[idx[0::2], idx[0::2]] = sigma_dist**2
    noise[idx[1::2], idx[1::2]] = sigma_angle**2
    innovation_cov = z_cov + noise

    x_res = points - rf.state
    x_res[:, 2] = wrap_angles(x_res[:, 2])
    cross_cov = x_res.T @ (wc[:, None] * z_res)

    try:
        factor = cho_factor(innovation_cov)
    except LinAlgError:
        warnings.warn(
            f"robot {rf.robot_id}: innovation covariance not invertible, update skipped",
            UpdateSkippedWarning,
            stacklevel=2,
        )
        return rf
    gain = cho_solve(factor, cross_cov.T).T

    innovation = measured - z_mean
    innovation[1::2] = wrap_angles(innovation[1::2])
    new_state = rf.state + gain @ innovation
    new_cov = rf.covariance - gain @ innovation_cov @ gain.T
    try:
        new_cov = _clamped_spsd(new_cov, f"robot {rf.robot_id} update")
    except LinAlgError as exc:
        warnings.warn(
            f"{exc}; update skipped",
            UpdateSkippedWarning,
            stacklevel=2,
        )
        return rf
    return replace(rf, state=new_state, covariance=new_cov)


def _batch_entries(robot_id: int, scan) -> tuple[tuple[int, float, float], ...] | None:
    """Normalize a per-robot scan argument into batch entries.

    Accepts None (no update), a MeasurementBatch (its entries are kept,
    landmark poses are replaced by the snapshot), a sequence of
    Observation, or a sequence of (target_id, range, bearing) tuples.
    """
    if scan is None:
        return None
    if isinstance(scan, MeasurementBatch):
        if scan.observer_id != robot_id:
            raise ValueError(f"batch for robot {scan.observer_id} given to robot {robot_id}")
        return scan.entries
    entries = []
    for item in scan:
        if isinstance(item, Observation):
            if item.observer_id != robot_id:
                raise ValueError(
                    f"observation by robot {item.observer_id} given to robot {robot_id}"
                )
            entries.append((item.target_id, item.range_cm, item.bearing_rad))
        else:
            target_id, range_cm, bearing_rad = item
            entries.append((int(target_id), float(range_cm), float(bearing_rad)))
    return tuple(entries) if entries else None


def swarm_step(
    filters: Sequence[RobotFilter],
    controls: Sequence[ControlInput],
    scans: Sequence[Optional[object]],
    sigma_dist: float,
    sigma_angle: float,
) -> list[RobotFilter]:
    """Advance every robot's filter by one predict step plus optional update.

    All predicts run first; every update then reads landmark poses from a
    single snapshot of the post-predict means, so the result does not
    depend on robot processing order.  ``scans[i]`` may be None (no
    update for robot i), a sequence of Observation made by robot i, raw
    (target_id, range, bearing) tuples, or a MeasurementBatch (whose
    landmark poses are replaced by the snapshot).
    """
    if len(controls) != len(filters) or len(scans) != len(filters):
        raise ValueError(
            f"need one control and one scan slot per filter, got "
            f"{len(filters)} filters, {len(controls)} controls, {len(scans)} scans"
        )
    ids = [rf.robot_id for rf in filters]
    if len(set(ids)) != len(ids):
        raise ValueError(f"filters must have unique robot ids, got {ids}")

    predicted = [predict(rf, control) for rf, control in zip(filters, controls)]
    snapshot = {rf.robot_id: rf.pose for rf in predicted}

    result = []
    for rf, scan in zip(predicted, scans):
        entries = _batch_entries(rf.robot_id, scan)
        if entries is None:
            result.append(rf)
            continue
        for target_id, _, _ in entries:
            if target_id not in snapshot:
                raise ValueError(
                    f"robot {rf.robot_id} observed unknown robot {target_id}"
                )
        batch = MeasurementBatch(
            rf.robot_id,
            entries,
            {t: snapshot[t] for t, _, _ in entries},
        )
        result.append(update(rf, batch, sigma_dist, sigma_angle))
    return result


def state_record(t: float, rf: RobotFilter) -> dict:
    """JSON-ready export of one filter state at time ``t``."""
    return {
        "t": float(t),
        "robot_id": rf.robot_id,
        "x": float(rf.state[0]),
        "y": float(rf.state[1]),
        "theta": float(rf.state[2]),
        "cov": [float(v) for v in rf.covariance.reshape(-1)],
    }
