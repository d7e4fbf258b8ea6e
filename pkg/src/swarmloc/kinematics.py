"""Differential-drive motion model.

The same propagation code is used for simulator ground truth and for the
filter prediction step, so the two stay in exact agreement when no noise
is injected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose2D, wrap_angles
from .validation import require_finite_scalar, require_positive

# Below this commanded turn rate (rad/s) the arc is integrated as a
# straight line to avoid dividing by a vanishing omega.
STRAIGHT_LINE_OMEGA = 1e-9


@dataclass(frozen=True, slots=True)
class ControlInput:
    """Wheel speed command applied over one time step.

    Attributes
    ----------
    left_speed, right_speed : float
        Wheel rim speeds in cm/s.
    dt : float
        Step duration in seconds, strictly positive.
    wheel_base : float
        Distance between the wheels in cm, strictly positive.
    """

    left_speed: float
    right_speed: float
    dt: float
    wheel_base: float

    def __post_init__(self):
        object.__setattr__(self, "left_speed", require_finite_scalar("left_speed", self.left_speed))
        object.__setattr__(self, "right_speed", require_finite_scalar("right_speed", self.right_speed))
        object.__setattr__(self, "dt", require_positive("dt", self.dt))
        object.__setattr__(self, "wheel_base", require_positive("wheel_base", self.wheel_base))

    def body_velocities(self) -> tuple[float, float]:
        """Forward speed (cm/s) and turn rate (rad/s) for this command."""
        v = 0.5 * (self.left_speed + self.right_speed)
        omega = (self.right_speed - self.left_speed) / self.wheel_base
        return v, omega


def propagate(states: np.ndarray, control: ControlInput) -> np.ndarray:
    """Advance ``[x, y, theta]`` states by one control step along an exact arc.

    Parameters
    ----------
    states : ndarray, shape (..., 3)
        One or more states; the trailing axis is ``[x, y, theta]``.
    control : ControlInput

    Returns
    -------
    ndarray
        New states of the same shape, headings wrapped to (-pi, pi].
    """
    states = np.asarray(states, dtype=float)
    if states.shape[-1] != 3:
        raise ValueError(f"states must end in axis of size 3, got shape {states.shape}")
    v, omega = control.body_velocities()
    dt = control.dt
    theta = states[..., 2]
    out = states.copy()
    if abs(omega) < STRAIGHT_LINE_OMEGA:
        out[..., 0] += v * dt * np.cos(theta)
        out[..., 1] += v * dt * np.sin(theta)
    else:
        radius = v / omega
        theta_new = theta + omega * dt
        out[..., 0] += radius * (np.sin(theta_new) - np.sin(theta))
        out[..., 1] -= radius * (np.cos(theta_new) - np.cos(theta))
        out[..., 2] = wrap_angles(theta_new)
    return out


def step_pose(pose: Pose2D, control: ControlInput) -> Pose2D:
    """Single-pose convenience wrapper around :func:`propagate`."""
    new = propagate(pose.as_array(), control)
    return Pose2D(float(new[0]), float(new[1]), float(new[2]))


def wheel_speeds_for(v: float, omega: float, wheel_base: float) -> tuple[float, float]:
    """Invert the body-velocity map: wheel speeds realizing (v, omega)."""
    v = require_finite_scalar("v", v)
    omega = require_finite_scalar("omega", omega)
    wheel_base = require_positive("wheel_base", wheel_base)
    half = 0.5 * omega * wheel_base
    return v - half, v + half


def turning_radius(control: ControlInput) -> float:
    """Signed turning radius in cm; ``inf`` for straight-line motion."""
    v, omega = control.body_velocities()
    if abs(omega) < STRAIGHT_LINE_OMEGA:
        return math.inf
    return v / omega
