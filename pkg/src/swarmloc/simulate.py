"""Swarm simulator: formations, maneuvers, slip, and scheduled sensing.

Ground truth advances through the same differential-drive code the filter
uses for prediction.  Wheel slip scales the true motion without touching
the reported controls, producing the model/truth mismatch that process
noise has to absorb.  All randomness flows from the scenario seed through
three independent streams (formation, slip, sensing), so a scenario is a
pure function of its seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ScenarioError, TraceFormatError
from .geometry import Observation, Pose2D, angle_residual, normalize_angle, poses_to_array
from .kinematics import ControlInput, propagate, wheel_speeds_for
from .sensing import SensorNoiseModel, sense
from .ukf import MotionNoise

FORMATIONS = ("random", "circle", "line", "grid")
TRAJECTORIES = ("static", "rotate_in_place", "forward_arcs", "waypoint_list")

# Characterized platform speeds: 3 cm/s forward, 20 deg/s rotation.
FORWARD_SPEED_CM_S = 3.0
TURN_RATE_RAD_S = math.radians(20.0)

# True wheel speeds are scaled by this factor while a robot slips.
SLIP_FACTOR = 0.5

_RANDOM_PLACEMENT_ATTEMPTS = 10_000

# Period (s) of the turn-rate modulation used by the forward_arcs policy.
_ARC_PERIOD_S = 20.0


@dataclass(frozen=True)
class Scenario:
    """Declarative description of one simulation run.

    ``slip_model`` is (probability per second, duration s): each
    non-slipping robot starts a slip with that per-second probability, and
    the slip lasts for the given duration.  ``waypoints`` is required only
    for the waypoint_list trajectory: one list of (x, y) targets per robot.
    """

    n_robots: int = 5
    field_size: float = 500.0
    robot_radius: float = 10.0
    formation: str = "circle"
    trajectory: str = "static"
    duration: float = 10.0
    predict_rate: float = 30.0
    sensor_rate: float = 1.0
    wheel_base: float = 10.0
    sensor: SensorNoiseModel = field(default_factory=SensorNoiseModel)
    motion_noise: MotionNoise = field(default_factory=MotionNoise)
    slip_model: tuple[float, float] = (0.0, 1.0)
    seed: int = 0
    waypoints: Optional[tuple[tuple[tuple[float, float], ...], ...]] = None

    def __post_init__(self):
        def bad(name, message):
            return ScenarioError(f"{name}: {message}")

        n = int(self.n_robots)
        if n < 2:
            raise bad("n_robots", f"must be at least 2, got {self.n_robots!r}")
        object.__setattr__(self, "n_robots", n)
        for name in ("field_size", "robot_radius", "duration", "predict_rate",
                     "sensor_rate", "wheel_base"):
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise bad(name, f"must be a number, got {value!r}") from None
            if not math.isfinite(value) or value <= 0.0:
                raise bad(name, f"must be positive, got {value!r}")
            object.__setattr__(self, name, value)
        if self.formation not in FORMATIONS:
            raise bad("formation", f"must be one of {FORMATIONS}, got {self.formation!r}")
        if self.trajectory not in TRAJECTORIES:
            raise bad("trajectory", f"must be one of {TRAJECTORIES}, got {self.trajectory!r}")
        if not isinstance(self.sensor, SensorNoiseModel):
            raise bad("sensor", f"must be a SensorNoiseModel, got {type(self.sensor).__name__}")
        if not isinstance(self.motion_noise, MotionNoise):
            raise bad("motion_noise",
                      f"must be a MotionNoise, got {type(self.motion_noise).__name__}")
        try:
            slip_prob, slip_duration = self.slip_model
            slip_prob = float(slip_prob)
            slip_duration = float(slip_duration)
        except (TypeError, ValueError):
            raise bad("slip_model",
                      f"must be (probability per s, duration s), got {self.slip_model!r}") from None
        if not 0.0 <= slip_prob <= 1.0:
            raise bad("slip_model", f"probability must be in [0, 1], got {slip_prob!r}")
        if slip_duration <= 0.0:
            raise bad("slip_model", f"duration must be positive, got {slip_duration!r}")
        object.__setattr__(self, "slip_model", (slip_prob, slip_duration))
        object.__setattr__(self, "seed", int(self.seed))
        if self.trajectory == "waypoint_list":
            if self.waypoints is None:
                raise bad("waypoints", "required for the waypoint_list trajectory")
            waypoints = tuple(
                tuple((float(x), float(y)) for x, y in robot_wps)
                for robot_wps in self.waypoints
            )
            if len(waypoints) != n:
                raise bad("waypoints", f"need one list per robot ({n}), got {len(waypoints)}")
            if any(len(w) == 0 for w in waypoints):
                raise bad("waypoints", "every robot needs at least one waypoint")
            object.__setattr__(self, "waypoints", waypoints)
        elif self.waypoints is not None:
            waypoints = tuple(
                tuple((float(x), float(y)) for x, y in robot_wps)
                for robot_wps in self.waypoints
            )
            object.__setattr__(self, "waypoints", waypoints)

    @property
    def dt(self) -> float:
        return 1.0 / self.predict_rate

    @property
    def n_steps(self) -> int:
        return max(1, round(self.duration * self.predict_rate))

    @property
    def sensor_stride(self) -> int:
        """Predict steps between sensor ticks."""
        return max(1, round(self.predict_rate / self.sensor_rate))


def scenario_to_dict(scenario: Scenario) -> dict:
    data = {
        "n_robots": scenario.n_robots,
        "field_size": scenario.field_size,
        "robot_radius": scenario.robot_radius,
        "formation": scenario.formation,
        "trajectory": scenario.trajectory,
        "duration": scenario.duration,
        "predict_rate": scenario.predict_rate,
        "sensor_rate": scenario.sensor_rate,
        "wheel_base": scenario.wheel_base,
        "sensor": {
            "sigma_dist": scenario.sensor.sigma_dist,
            "sigma_angle": scenario.sensor.sigma_angle,
            "outlier_probability": scenario.sensor.outlier_probability,
            "outlier_offset_range": list(scenario.sensor.outlier_offset_range),
            "max_range": scenario.sensor.max_range,
            "angular_resolution": scenario.sensor.angular_resolution,
        },
        "motion_noise": {
            "sigma_x": scenario.motion_noise.sigma_x,
            "sigma_y": scenario.motion_noise.sigma_y,
            "sigma_theta": scenario.motion_noise.sigma_theta,
        },
        "slip_model": list(scenario.slip_model),
        "seed": scenario.seed,
    }
    if scenario.waypoints is not None:
        data["waypoints"] = [[list(p) for p in robot_wps] for robot_wps in scenario.waypoints]
    return data


_SENSOR_KEYS = {
    "sigma_dist", "sigma_angle", "outlier_probability",
    "outlier_offset_range", "max_range", "angular_resolution",
}
_MOTION_KEYS = {"sigma_x", "sigma_y", "sigma_theta"}
_SCENARIO_KEYS = {
    "n_robots", "field_size", "robot_radius", "formation", "trajectory",
    "duration", "predict_rate", "sensor_rate", "wheel_base", "sensor",
    "motion_noise", "slip_model", "seed", "waypoints",
}


def scenario_from_dict(data: dict) -> Scenario:
    """Build a Scenario from parsed JSON, rejecting unknown fields by name."""
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario must be a JSON object, got {type(data).__name__}")
    unknown = set(data) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
    # every other field has a default, but a robot count must be explicit
    if "n_robots" not in data:
        raise ScenarioError("n_robots: required field is missing")
    kwargs = dict(data)
    if "sensor" in kwargs:
        sensor = kwargs["sensor"]
        if not isinstance(sensor, dict):
            raise ScenarioError("sensor: must be an object")
        unknown = set(sensor) - _SENSOR_KEYS
        if unknown:
            raise ScenarioError(f"unknown sensor field(s): {', '.join(sorted(unknown))}")
        if "outlier_offset_range" in sensor:
            sensor = dict(sensor)
            sensor["outlier_offset_range"] = tuple(sensor["outlier_offset_range"])
        try:
            kwargs["sensor"] = SensorNoiseModel(**sensor)
        except ValueError as exc:
            raise ScenarioError(f"sensor: {exc}") from exc
    if "motion_noise" in kwargs:
        noise = kwargs["motion_noise"]
        if not isinstance(noise, dict):
            raise ScenarioError("motion_noise: must be an object")
        unknown = set(noise) - _MOTION_KEYS
        if unknown:
            raise ScenarioError(f"unknown motion_noise field(s): {', '.join(sorted(unknown))}")
        try:
            kwargs["motion_noise"] = MotionNoise(**noise)
        except ValueError as exc:
            raise ScenarioError(f"motion_noise: {exc}") from exc
    if "slip_model" in kwargs:
        kwargs["slip_model"] = tuple(kwargs["slip_model"])
    try:
        return Scenario(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(data)


def build_formation(scenario: Scenario, rng: np.random.Generator) -> list[Pose2D]:
    """Initial poses for the scenario's formation.

    circle: evenly spaced at radius field_size/4 around the field center,
    headings tangent to the circle.  line: along x from the origin with
    4*robot_radius spacing.  grid: nearest-square lattice with the same
    spacing.  random: uniform over the field with minimum pairwise
    separation 3*robot_radius and random headings.
    """
    n = scenario.n_robots
    if scenario.formation == "circle":
        center = 0.5 * scenario.field_size
        radius = scenario.field_size / 4.0
        poses = []
        for i in range(n):
            angle = 2.0 * math.pi * i / n
            poses.append(
                Pose2D(
                    center + radius * math.cos(angle),
                    center + radius * math.sin(angle),
                    normalize_angle(angle + 0.5 * math.pi),
                )
            )
        return poses
    if scenario.formation == "line":
        spacing = 4.0 * scenario.robot_radius
        y = 0.5 * scenario.field_size
        return [Pose2D(i * spacing, y, 0.0) for i in range(n)]
    if scenario.formation == "grid":
        spacing = 4.0 * scenario.robot_radius
        cols = math.ceil(math.sqrt(n))
        return [Pose2D((i % cols) * spacing, (i // cols) * spacing, 0.0) for i in range(n)]
    # random placement with rejection sampling
    min_sep = 3.0 * scenario.robot_radius
    placed: list[tuple[float, float]] = []
    attempts = 0
    while len(placed) < n:
        if attempts >= _RANDOM_PLACEMENT_ATTEMPTS:
            raise ScenarioError(
                f"could not place {n} robots with separation {min_sep:g} cm in a "
                f"{scenario.field_size:g} cm field after {attempts} attempts"
            )
        attempts += 1
        x = rng.uniform(0.0, scenario.field_size)
        y = rng.uniform(0.0, scenario.field_size)
        if all(math.hypot(x - px, y - py) >= min_sep for px, py in placed):
            placed.append((x, y))
    headings = rng.uniform(-math.pi, math.pi, n)
    return [Pose2D(x, y, h) for (x, y), h in zip(placed, headings)]


@dataclass
class TruthState:
    """Carried state for step_truth: per-robot remaining slip time and
    current waypoint index."""

    slip_remaining: np.ndarray
    waypoint_index: np.ndarray

    @classmethod
    def initial(cls, n_robots: int) -> "TruthState":
        return cls(np.zeros(n_robots), np.zeros(n_robots, dtype=int))


@dataclass(frozen=True)
class TruthStep:
    poses: list[Pose2D]
    controls: list[ControlInput]
    state: TruthState


def _commanded_velocities(
    scenario: Scenario, poses: Sequence[Pose2D], t: float, state: TruthState
) -> list[tuple[float, float]]:
    """Per-robot (v, omega) commands for the scenario's trajectory policy."""
    n = scenario.n_robots
    if scenario.trajectory == "static":
        return [(0.0, 0.0)] * n
    if scenario.trajectory == "rotate_in_place":
        return [(0.0, TURN_RATE_RAD_S)] * n
    if scenario.trajectory == "forward_arcs":
        # weaving arcs: slow sinusoidal turn-rate modulation, phase-offset
        # per robot so the swarm geometry keeps changing
        commands = []
        for i in range(n):
            phase = 2.0 * math.pi * (t / _ARC_PERIOD_S + i / n)
            commands.append((FORWARD_SPEED_CM_S, 0.5 * TURN_RATE_RAD_S * math.sin(phase)))
        return commands
    # waypoint_list: turn toward the current waypoint, advance when close
    commands = []
    for i in range(n):
        targets = scenario.waypoints[i]
        idx = int(state.waypoint_index[i])
        tx, ty = targets[idx % len(targets)]
        pose = poses[i]
        distance = math.hypot(tx - pose.x, ty - pose.y)
        if distance < 2.0 * scenario.robot_radius:
            idx += 1
            state.waypoint_index[i] = idx
            tx, ty = targets[idx % len(targets)]
            distance = math.hypot(tx - pose.x, ty - pose.y)
        heading_error = angle_residual(math.atan2(ty - pose.y, tx - pose.x), pose.theta)
        omega = max(-TURN_RATE_RAD_S, min(TURN_RATE_RAD_S, 2.0 * heading_error))
        v = FORWARD_SPEED_CM_S if abs(heading_error) < 0.5 * math.pi else 0.0
        commands.append((v, omega))
    return commands


def step_truth(
    poses: Sequence[Pose2D],
    scenario: Scenario,
    t: float,
    rng: np.random.Generator,
    state: TruthState | None = None,
) -> TruthStep:
    """Advance ground truth by one predict step.

    Returns the next poses, the commanded controls (what the filters see),
    and the carried state.  While a robot slips its true wheel speeds are
    scaled by ``SLIP_FACTOR`` but the reported control is unchanged.
    """
    n = scenario.n_robots
    if len(poses) != n:
        raise ValueError(f"expected {n} poses, got {len(poses)}")
    if state is None:
        state = TruthState.initial(n)
    dt = scenario.dt
    slip_prob, slip_duration = scenario.slip_model

    commands = _commanded_velocities(scenario, poses, t, state)
    controls = []
    next_poses = []
    for i, (v, omega) in enumerate(commands):
        left, right = wheel_speeds_for(v, omega, scenario.wheel_base)
        control = ControlInput(left, right, dt, scenario.wheel_base)
        controls.append(control)
        if slip_prob > 0.0:
            if state.slip_remaining[i] <= 0.0 and rng.random() < slip_prob * dt:
                state.slip_remaining[i] = slip_duration
        if state.slip_remaining[i] > 0.0:
            true_control = ControlInput(
                SLIP_FACTOR * left, SLIP_FACTOR * right, dt, scenario.wheel_base
            )
            state.slip_remaining[i] -= dt
        else:
            true_control = control
        moved = propagate(poses[i].as_array(), true_control)
        next_poses.append(Pose2D(float(moved[0]), float(moved[1]), float(moved[2])))
    return TruthStep(next_poses, controls, state)


@dataclass(frozen=True)
class SimulationTrace:
    """Everything an estimator consumes: timestamps, ground truth,
    commanded controls, and per-sensor-tick observation batches.

    ``truth`` has shape (n_steps + 1, n_robots, 3); ``wheel_speeds`` has
    shape (n_steps, n_robots, 2) of commanded (left, right);
    ``observations[k]`` maps a sensor-tick step index to one list of
    observations per robot.
    """

    scenario: Scenario
    timestamps: np.ndarray
    truth: np.ndarray
    wheel_speeds: np.ndarray
    observations: dict[int, list[list[Observation]]]

    @property
    def n_steps(self) -> int:
        return self.wheel_speeds.shape[0]

    def sensor_steps(self) -> list[int]:
        return sorted(self.observations)

    def controls_at(self, step: int) -> list[ControlInput]:
        """Commanded controls applied between step and step + 1."""
        return [
            ControlInput(float(left), float(right), self.scenario.dt, self.scenario.wheel_base)
            for left, right in self.wheel_speeds[step]
        ]

    def truth_poses(self, step: int) -> list[Pose2D]:
        return [Pose2D(*row) for row in self.truth[step]]


def run(scenario: Scenario) -> SimulationTrace:
    """Simulate a scenario end to end, deterministically in its seed.

    Sensor batches are generated at every sensor tick for every ordered
    robot pair within sensing range.
    """
    seeds = np.random.SeedSequence(scenario.seed).spawn(3)
    formation_rng = np.random.default_rng(seeds[0])
    slip_rng = np.random.default_rng(seeds[1])
    sensor_rng = np.random.default_rng(seeds[2])

    poses = build_formation(scenario, formation_rng)
    n = scenario.n_robots
    n_steps = scenario.n_steps
    stride = scenario.sensor_stride
    dt = scenario.dt

    truth = np.empty((n_steps + 1, n, 3))
    truth[0] = poses_to_array(poses)
    wheel_speeds = np.empty((n_steps, n, 2))
    observations: dict[int, list[list[Observation]]] = {}

    def sense_all(step: int, current: Sequence[Pose2D]):
        batches: list[list[Observation]] = []
        for i in range(n):
            batch = []
            for j in range(n):
                if i == j:
                    continue
                obs = sense(
                    current[i], current[j], scenario.sensor, sensor_rng,
                    observer_id=i, target_id=j,
                )
                if obs is not None:
                    batch.append(obs)
            batches.append(batch)
        observations[step] = batches

    sense_all(0, poses)
    state = TruthState.initial(n)
    for k in range(n_steps):
        result = step_truth(poses, scenario, k * dt, slip_rng, state)
        poses = result.poses
        state = result.state
        for i, control in enumerate(result.controls):
            wheel_speeds[k, i] = (control.left_speed, control.right_speed)
        truth[k + 1] = poses_to_array(poses)
        if (k + 1) % stride == 0:
            sense_all(k + 1, poses)

    timestamps = np.arange(n_steps + 1) * dt
    return SimulationTrace(scenario, timestamps, truth, wheel_speeds, observations)


def write_trace(trace: SimulationTrace, path) -> None:
    """Write a trace as JSON lines: a scenario header, then one record per
    timestep carrying truth, commanded controls, and any sensor batch."""
    with open(path, "w") as fh:
        header = {"type": "scenario", "scenario": scenario_to_dict(trace.scenario)}
        fh.write(json.dumps(header) + "\n")
        for k in range(trace.n_steps + 1):
            record = {
                "type": "step",
                "k": k,
                "t": float(trace.timestamps[k]),
                "truth": [[float(v) for v in row] for row in trace.truth[k]],
            }
            if k < trace.n_steps:
                record["controls"] = [
                    [float(v) for v in row] for row in trace.wheel_speeds[k]
                ]
            if k in trace.observations:
                record["observations"] = [
                    [
                        {
                            "target": o.target_id,
                            "range_cm": o.range_cm,
                            "bearing_rad": o.bearing_rad,
                        }
                        for o in robot_obs
                    ]
                    for robot_obs in trace.observations[k]
                ]
            fh.write(json.dumps(record) + "\n")


def read_trace(path) -> SimulationTrace:
    """Inverse of :func:`write_trace`; floats round-trip exactly."""
    with open(path) as fh:
        lines = [line for line in fh if line.strip()]
    if not lines:
        raise TraceFormatError(f"{path}: empty trace file")

    def parse(lineno: int, line: str) -> dict:
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
        if not isinstance(record, dict) or "type" not in record:
            raise TraceFormatError(f"{path}:{lineno}: expected an object with a 'type' field")
        return record

    header = parse(1, lines[0])
    if header.get("type") != "scenario" or "scenario" not in header:
        raise TraceFormatError(f"{path}:1: first record must be the scenario header")
    scenario = scenario_from_dict(header["scenario"])

    n = scenario.n_robots
    steps = []
    for lineno, line in enumerate(lines[1:], start=2):
        record = parse(lineno, line)
        if record.get("type") != "step":
            raise TraceFormatError(f"{path}:{lineno}: expected a step record")
        steps.append((lineno, record))
    if not steps:
        raise TraceFormatError(f"{path}: trace has no step records")

    n_steps = len(steps) - 1
    truth = np.empty((n_steps + 1, n, 3))
    wheel_speeds = np.empty((n_steps, n, 2))
    timestamps = np.empty(n_steps + 1)
    observations: dict[int, list[list[Observation]]] = {}
    for idx, (lineno, record) in enumerate(steps):
        try:
            if record["k"] != idx:
                raise TraceFormatError(
                    f"{path}:{lineno}: step index {record['k']} out of order, expected {idx}"
                )
            timestamps[idx] = float(record["t"])
            truth_rows = record["truth"]
            if len(truth_rows) != n:
                raise TraceFormatError(
                    f"{path}:{lineno}: expected {n} truth rows, got {len(truth_rows)}"
                )
            truth[idx] = truth_rows
            if idx < n_steps:
                wheel_speeds[idx] = record["controls"]
            if "observations" in record:
                batches = [
                    [
                        Observation(i, o["target"], o["range_cm"], o["bearing_rad"])
                        for o in robot_obs
                    ]
                    for i, robot_obs in enumerate(record["observations"])
                ]
                if len(batches) != n:
                    raise TraceFormatError(
                        f"{path}:{lineno}: expected {n} observation lists, got {len(batches)}"
                    )
                observations[idx] = batches
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceFormatError(f"{path}:{lineno}: malformed step record ({exc})") from exc
    return SimulationTrace(scenario, timestamps, truth, wheel_speeds, observations)
