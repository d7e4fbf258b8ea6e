"""Direct swarm configuration estimation from one batch of observations.

Each observation (robot n sees robot m at some range and bearing) predicts
the world-frame displacement between the two robots once n's heading is
known.  The squared mismatch between candidate displacements and perceived
displacements, summed over all observations, is the objective

    phi = sum_n sum_{m in M_n} | d_mn - d'_mn |^2

minimized over all poses with robot 0 pinned at the origin with zero
heading to fix the translation/rotation gauge.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator

from .errors import EstimationDivergedError, ObservabilityWarning
from .geometry import (
    Observation,
    Pose2D,
    SensingGraph,
    array_to_poses,
    poses_to_array,
)
from .validation import require_positive

# A solve is accepted without further restarts once phi falls below this
# fraction of the total squared observed range (machine-noise level).
_EARLY_EXIT_REL_PHI = 1e-15


@dataclass(frozen=True)
class ObservabilityCheck:
    """Result of the counting precheck: scalar observation count vs DOF."""

    satisfied: bool
    observation_count: int
    dof: int


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`estimate`.

    ``n_restarts`` jittered restarts are attempted after the base initial
    guess; the lowest-objective solution wins.  ``tolerance`` is the
    gradient norm below which the result is flagged converged.
    """

    tolerance: float = 1e-8
    max_iterations: int = 500
    n_restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tolerance", require_positive("tolerance", self.tolerance))
        max_iterations = int(self.max_iterations)
        if max_iterations < 1:
            raise ValueError(f"max_iterations must be at least 1, got {self.max_iterations!r}")
        object.__setattr__(self, "max_iterations", max_iterations)
        n_restarts = int(self.n_restarts)
        if n_restarts < 0:
            raise ValueError(f"n_restarts must be non-negative, got {self.n_restarts!r}")
        object.__setattr__(self, "n_restarts", n_restarts)
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class EstimationProblem:
    """One batch estimation instance: sensing graph, observations, optional
    initial guess.  Every observation must be an edge of the graph."""

    graph: SensingGraph
    observations: tuple[Observation, ...]
    initial_guess: Optional[tuple[Pose2D, ...]] = None

    def __post_init__(self):
        observations = tuple(self.observations)
        for obs in observations:
            if not isinstance(obs, Observation):
                raise TypeError(f"observations must be Observation, got {type(obs).__name__}")
            in_graph = (
                obs.observer_id < self.graph.n_robots
                and obs.target_id in self.graph.adjacency[obs.observer_id]
            )
            if not in_graph:
                raise ValueError(
                    f"observation {obs.observer_id} -> {obs.target_id} is not an edge of the graph"
                )
        object.__setattr__(self, "observations", observations)
        if self.initial_guess is not None:
            guess = tuple(self.initial_guess)
            if len(guess) != self.graph.n_robots:
                raise ValueError(
                    f"initial_guess has {len(guess)} poses for {self.graph.n_robots} robots"
                )
            for p in guess:
                if not isinstance(p, Pose2D):
                    raise TypeError(f"initial_guess must contain Pose2D, got {type(p).__name__}")
            object.__setattr__(self, "initial_guess", guess)

    @classmethod
    def from_observations(
        cls,
        n_robots: int,
        observations: Iterable[Observation],
        initial_guess: Optional[Sequence[Pose2D]] = None,
    ) -> "EstimationProblem":
        observations = tuple(observations)
        graph = SensingGraph.from_observations(n_robots, observations)
        return cls(graph, observations, tuple(initial_guess) if initial_guess else None)


@dataclass(frozen=True)
class EstimationResult:
    """Solved swarm configuration.

    ``unconstrained_heading_ids`` lists robots whose heading does not enter
    the objective (they observe no one); their reported headings are
    whatever the initial guess contained.
    """

    poses: tuple[Pose2D, ...]
    objective_value: float
    iterations: int
    converged: bool
    unconstrained_heading_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if self.objective_value < 0.0:
            raise ValueError(f"objective_value must be non-negative, got {self.objective_value!r}")


def observability_check(graph: SensingGraph) -> ObservabilityCheck:
    """Counting bound: each edge contributes two scalars (range, bearing),
    which must cover the 3N - 3 gauge-fixed degrees of freedom.

    Necessary but not sufficient: a graph can satisfy the count yet still
    leave the configuration ambiguous.
    """
    if graph.n_robots < 2:
        raise ValueError(f"observability check needs at least 2 robots, got {graph.n_robots}")
    observation_count = 2 * graph.n_edges
    dof = 3 * graph.n_robots - 3
    return ObservabilityCheck(observation_count >= dof, observation_count, dof)


def _observation_arrays(observations: Sequence[Observation]):
    """Split a batch into index/value arrays for vectorized evaluation."""
    n_idx = np.array([o.observer_id for o in observations], dtype=int)
    m_idx = np.array([o.target_id for o in observations], dtype=int)
    ranges = np.array([o.range_cm for o in observations], dtype=float)
    bearings = np.array([o.bearing_rad for o in observations], dtype=float)
    return n_idx, m_idx, ranges, bearings


def _residuals(states: np.ndarray, n_idx, m_idx, ranges, bearings) -> np.ndarray:
    """Per-edge displacement mismatch, interleaved (x, y) per observation."""
    angles = bearings + states[n_idx, 2]
    pred_dx = ranges * np.cos(angles)
    pred_dy = ranges * np.sin(angles)
    res = np.empty(2 * len(ranges))
    res[0::2] = (states[m_idx, 0] - states[n_idx, 0]) - pred_dx
    res[1::2] = (states[m_idx, 1] - states[n_idx, 1]) - pred_dy
    return res


def _jacobian_full(states: np.ndarray, n_idx, m_idx, ranges, bearings) -> np.ndarray:
    """Dense Jacobian of the residual vector wrt all 3N coordinates."""
    n_edges = len(ranges)
    n_robots = states.shape[0]
    angles = bearings + states[n_idx, 2]
    jac = np.zeros((2 * n_edges, 3 * n_robots))
    rows = np.arange(n_edges)
    jac[2 * rows, 3 * m_idx] = 1.0
    jac[2 * rows, 3 * n_idx] -= 1.0
    jac[2 * rows, 3 * n_idx + 2] += ranges * np.sin(angles)
    jac[2 * rows + 1, 3 * m_idx + 1] = 1.0
    jac[2 * rows + 1, 3 * n_idx + 1] -= 1.0
    jac[2 * rows + 1, 3 * n_idx + 2] -= ranges * np.cos(angles)
    return jac


def _check_ids_covered(n_robots: int, observations: Sequence[Observation]):
    for obs in observations:
        if obs.observer_id >= n_robots or obs.target_id >= n_robots:
            raise ValueError(
                f"observation references robot {max(obs.observer_id, obs.target_id)} "
                f"but only {n_robots} poses were given"
            )


def objective(poses: Sequence[Pose2D], observations: Sequence[Observation]) -> float:
    """Evaluate phi for candidate poses, in cm^2."""
    states = poses_to_array(poses)
    _check_ids_covered(states.shape[0], observations)
    if not observations:
        return 0.0
    res = _residuals(states, *_observation_arrays(observations))
    return float(np.dot(res, res))


def objective_gradient(poses: Sequence[Pose2D], observations: Sequence[Observation]) -> np.ndarray:
    """Gradient of phi wrt every pose coordinate, shape (n_robots, 3)."""
    states = poses_to_array(poses)
    _check_ids_covered(states.shape[0], observations)
    if not observations:
        return np.zeros_like(states)
    arrays = _observation_arrays(observations)
    res = _residuals(states, *arrays)
    jac = _jacobian_full(states, *arrays)
    return (2.0 * jac.T @ res).reshape(-1, 3)


def _gauge_fix(states: np.ndarray) -> np.ndarray:
    """Rigidly move a configuration so robot 0 sits at (0, 0, 0)."""
    out = states.copy()
    out[:, 0] -= states[0, 0]
    out[:, 1] -= states[0, 1]
    theta0 = states[0, 2]
    c, s = math.cos(-theta0), math.sin(-theta0)
    x, y = out[:, 0].copy(), out[:, 1].copy()
    out[:, 0] = c * x - s * y
    out[:, 1] = s * x + c * y
    out[:, 2] -= theta0
    return out


def _initial_states(problem: EstimationProblem, radius: float) -> np.ndarray:
    """Default starting point: robots on a circle, headings zero."""
    n = problem.graph.n_robots
    angles = 2.0 * math.pi * np.arange(n) / n
    states = np.zeros((n, 3))
    states[:, 0] = radius * np.cos(angles)
    states[:, 1] = radius * np.sin(angles)
    return _gauge_fix(states)


def estimate(problem: EstimationProblem, config: SolverConfig | None = None) -> EstimationResult:
    """Minimize phi over all poses with robot 0 pinned at the origin.

    Warns (and proceeds) when the observability count is not satisfied;
    the under-observed failure mode is a legitimate outcome.  Multi-start
    restarts with jittered initial guesses guard against local minima.

    Raises
    ------
    EstimationDivergedError
        If the solver produced non-finite values; carries the last iterate.
    ValueError
        For an empty observation batch or fewer than 2 robots.
    """
    config = config or SolverConfig()
    n = problem.graph.n_robots
    check = observability_check(problem.graph)
    if not check.satisfied:
        warnings.warn(
            f"observation count {check.observation_count} is below the "
            f"{check.dof} degrees of freedom; the estimate may be ambiguous",
            ObservabilityWarning,
            stacklevel=2,
        )
    if not problem.observations:
        raise ValueError("estimation requires at least one observation")

    arrays = _observation_arrays(problem.observations)
    _, _, ranges, _ = arrays
    mean_range = float(np.mean(ranges))
    radius = max(mean_range, 1.0)

    if problem.initial_guess is not None:
        base = _gauge_fix(poses_to_array(problem.initial_guess))
    else:
        base = _initial_states(problem, radius)

    def fun(free: np.ndarray) -> np.ndarray:
        states = np.vstack([np.zeros(3), free.reshape(-1, 3)])
        return _residuals(states, *arrays)

    def jac(free: np.ndarray) -> np.ndarray:
        states = np.vstack([np.zeros(3), free.reshape(-1, 3)])
        return _jacobian_full(states, *arrays)[:, 3:]

    total_sq_range = float(np.dot(ranges, ranges))
    rng = np.random.default_rng(config.seed)
    best = None
    for attempt in range(1 + config.n_restarts):
        start = base.copy()
        if attempt > 0:
            start[1:, 0] += rng.normal(0.0, 0.5 * radius, n - 1)
            start[1:, 1] += rng.normal(0.0, 0.5 * radius, n - 1)
            start[1:, 2] = rng.uniform(-math.pi, math.pi, n - 1)
        x0 = start[1:].reshape(-1)
        try:
            sol = least_squares(
                fun,
                x0,
                jac=jac,
                method="trf",
                xtol=1e-14,
                ftol=1e-14,
                gtol=1e-14,
                max_nfev=config.max_iterations,
            )
        except ValueError as exc:
            raise EstimationDivergedError(
                f"solver failed on restart {attempt}: {exc}",
                last_poses=array_to_poses(start),
            ) from exc
        if not (np.all(np.isfinite(sol.x)) and math.isfinite(sol.cost)):
            raise EstimationDivergedError(
                f"solver produced non-finite values on restart {attempt}",
                last_poses=array_to_poses(start),
            )
        phi = 2.0 * float(sol.cost)
        if best is None or phi < best[0]:
            best = (phi, sol)
        if best[0] <= _EARLY_EXIT_REL_PHI * total_sq_range:
            break

    phi, sol = best
    states = np.vstack([np.zeros(3), sol.x.reshape(-1, 3)])
    gradient = 2.0 * jac(sol.x).T @ fun(sol.x)
    converged = bool(np.linalg.norm(gradient) < config.tolerance)
    unconstrained = tuple(
        i for i in range(1, n) if len(problem.graph.adjacency[i]) == 0
    )
    return EstimationResult(
        poses=array_to_poses(states),
        objective_value=phi,
        iterations=int(sol.nfev),
        converged=converged,
        unconstrained_heading_ids=unconstrained,
    )


def _coerce_observations(X) -> tuple[Observation, ...]:
    """Accept Observation sequences or (E, 4) array-likes of
    [observer, target, range_cm, bearing_rad] rows."""
    items = list(X)
    if all(isinstance(o, Observation) for o in items):
        return tuple(items)
    coerced = []
    for i, row in enumerate(items):
        row = np.asarray(row, dtype=float)
        if row.shape != (4,):
            raise ValueError(f"row {i} must be [observer, target, range_cm, bearing_rad]")
        observer, target = int(round(row[0])), int(round(row[1]))
        coerced.append(Observation(observer, target, float(row[2]), float(row[3])))
    return tuple(coerced)


class DirectPoseEstimator(BaseEstimator):
    """Scikit-learn style wrapper around :func:`estimate`.

    ``fit(X)`` takes a batch of observations (Observation objects or
    ``[observer, target, range_cm, bearing_rad]`` rows) and solves for the
    swarm configuration.

    Attributes
    ----------
    result_ : EstimationResult
    poses_ : ndarray, shape (n_robots, 3)
        Rows of ``[x, y, theta]``.
    objective_value_ : float
    n_iter_ : int
    converged_ : bool
    unconstrained_heading_ids_ : tuple of int
    """

    def __init__(self, tolerance: float = 1e-8, max_iterations: int = 500,
                 n_restarts: int = 5, seed: int = 0):
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.n_restarts = n_restarts
        self.seed = seed

    def fit(self, X, y=None, *, n_robots: int | None = None,
            initial_guess: Sequence[Pose2D] | None = None):
        observations = _coerce_observations(X)
        if n_robots is None:
            if not observations:
                raise ValueError("cannot infer n_robots from an empty batch")
            n_robots = 1 + max(
                max(o.observer_id for o in observations),
                max(o.target_id for o in observations),
            )
        problem = EstimationProblem.from_observations(n_robots, observations, initial_guess)
        config = SolverConfig(
            tolerance=self.tolerance,
            max_iterations=self.max_iterations,
            n_restarts=self.n_restarts,
            seed=self.seed,
        )
        result = estimate(problem, config)
        self.result_ = result
        self.poses_ = poses_to_array(result.poses)
        self.objective_value_ = result.objective_value
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        self.unconstrained_heading_ids_ = result.unconstrained_heading_ids
        return self


def observations_to_dicts(observations: Iterable[Observation]) -> list[dict]:
    return [
        {
            "observer": o.observer_id,
            "target": o.target_id,
            "range_cm": o.range_cm,
            "bearing_rad": o.bearing_rad,
        }
        for o in observations
    ]


def observations_from_dicts(data: Iterable[dict]) -> tuple[Observation, ...]:
    observations = []
    for i, row in enumerate(data):
        try:
            observations.append(
                Observation(row["observer"], row["target"], row["range_cm"], row["bearing_rad"])
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"observation {i} is malformed: {row!r}") from exc
    return tuple(observations)


def load_observation_batch(path) -> tuple[Observation, ...]:
    """Read a JSON observation batch: a list of
    {observer, target, range_cm, bearing_rad} objects."""
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError(f"{path}: expected a JSON list of observations")
    return observations_from_dicts(data)


def result_to_dict(result: EstimationResult) -> dict:
    return {
        "poses": [{"x": p.x, "y": p.y, "theta": p.theta} for p in result.poses],
        "objective_value": result.objective_value,
        "iterations": result.iterations,
        "converged": result.converged,
        "unconstrained_heading_ids": list(result.unconstrained_heading_ids),
    }


def dump_estimation_result(result: EstimationResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(result_to_dict(result), fh, indent=2)
        fh.write("\n")
