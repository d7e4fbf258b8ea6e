"""Core value types and angle arithmetic.

Distances are centimeters, angles are radians, and every heading stored in a
:class:`Pose2D` is normalized to the half-open interval (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Fold an angle into (-pi, pi].

    Parameters
    ----------
    angle : float
        Angle in radians.  Must be finite.

    Returns
    -------
    float
        The equivalent angle in (-pi, pi].  Exactly pi maps to pi and
        exactly -pi maps to pi.

    Examples
    --------
    >>> normalize_angle(3.0 * math.pi) == math.pi
    True
    >>> normalize_angle(-1.5 * math.pi) == 0.5 * math.pi
    True
    """
    angle = float(angle)
    if not math.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle!r}")
    # math.remainder gives the IEEE remainder in [-pi, pi]; only the -pi
    # endpoint needs to be folded across.
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def angle_residual(a: float, b: float) -> float:
    """Signed shortest rotation from ``b`` to ``a``, in (-pi, pi].

    ``angle_residual(a, b) == -angle_residual(b, a)`` except on the branch
    cut at pi, where both sides return pi.
    """
    a = float(a)
    b = float(b)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError(f"angles must be finite, got {a!r}, {b!r}")
    return normalize_angle(a - b)


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorized fold of an angle array into (-pi, pi]."""
    angles = np.asarray(angles, dtype=float)
    wrapped = np.remainder(angles, TWO_PI)
    return np.where(wrapped > math.pi, wrapped - TWO_PI, wrapped)


@dataclass(frozen=True, slots=True)
class Pose2D:
    """Planar pose: position in centimeters, heading in radians.

    The heading is normalized on construction, so two poses representing
    the same physical configuration compare equal.
    """

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        x = float(self.x)
        y = float(self.y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"pose coordinates must be finite, got ({self.x!r}, {self.y!r})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def as_array(self) -> np.ndarray:
        """Return the pose as a float array ``[x, y, theta]``."""
        return np.array([self.x, self.y, self.theta], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "Pose2D":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (3,):
            raise ValueError(f"expected shape (3,), got {arr.shape}")
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


def displacement(from_pose: Pose2D, to_pose: Pose2D) -> np.ndarray:
    """World-frame displacement vector from one pose's position to another's."""
    return np.array([to_pose.x - from_pose.x, to_pose.y - from_pose.y])


@dataclass(frozen=True, slots=True)
class Observation:
    """One range/bearing measurement of a target robot by an observer.

    The bearing is expressed in the observer's body frame (zero along the
    observer's heading, positive counterclockwise) and is normalized to
    (-pi, pi] on construction.
    """

    observer_id: int
    target_id: int
    range_cm: float
    bearing_rad: float

    def __post_init__(self):
        observer = int(self.observer_id)
        target = int(self.target_id)
        if observer < 0 or target < 0:
            raise ValueError(f"robot ids must be non-negative, got {observer} -> {target}")
        if observer == target:
            raise ValueError(f"robot {observer} cannot observe itself")
        range_cm = float(self.range_cm)
        if not math.isfinite(range_cm) or range_cm <= 0.0:
            raise ValueError(f"range must be finite and positive, got {self.range_cm!r}")
        object.__setattr__(self, "observer_id", observer)
        object.__setattr__(self, "target_id", target)
        object.__setattr__(self, "range_cm", range_cm)
        object.__setattr__(self, "bearing_rad", normalize_angle(self.bearing_rad))


@dataclass(frozen=True)
class SensingGraph:
    """Directed who-observes-whom structure over ``n_robots`` robots.

    ``adjacency[i]`` is the frozen set of robot ids that robot ``i``
    currently observes.  Self-edges are rejected.
    """

    n_robots: int
    adjacency: tuple[frozenset[int], ...]

    def __post_init__(self):
        n = int(self.n_robots)
        if n < 1:
            raise ValueError(f"n_robots must be at least 1, got {self.n_robots!r}")
        object.__setattr__(self, "n_robots", n)
        adjacency = tuple(frozenset(int(t) for t in targets) for targets in self.adjacency)
        if len(adjacency) != n:
            raise ValueError(
                f"adjacency has {len(adjacency)} entries for {n} robots"
            )
        for i, targets in enumerate(adjacency):
            for t in targets:
                if t == i:
                    raise ValueError(f"robot {i} cannot observe itself")
                if not 0 <= t < n:
                    raise ValueError(f"robot {i} observes unknown robot {t}")
        object.__setattr__(self, "adjacency", adjacency)

    @property
    def n_edges(self) -> int:
        """Total number of directed observation edges."""
        return sum(len(targets) for targets in self.adjacency)

    def edges(self) -> Iterable[tuple[int, int]]:
        """Yield (observer, target) pairs in ascending order."""
        for i, targets in enumerate(self.adjacency):
            for t in sorted(targets):
                yield i, t

    @classmethod
    def fully_connected(cls, n_robots: int) -> "SensingGraph":
        """Graph where every robot observes every other robot."""
        return cls(
            n_robots,
            tuple(
                frozenset(j for j in range(n_robots) if j != i)
                for i in range(n_robots)
            ),
        )

    @classmethod
    def from_observations(
        cls, n_robots: int, observations: Iterable[Observation]
    ) -> "SensingGraph":
        """Graph induced by a batch of observations."""
        targets: list[set[int]] = [set() for _ in range(n_robots)]
        for obs in observations:
            if obs.observer_id >= n_robots or obs.target_id >= n_robots:
                raise ValueError(
                    f"observation {obs.observer_id} -> {obs.target_id} exceeds "
                    f"n_robots={n_robots}"
                )
            targets[obs.observer_id].add(obs.target_id)
        return cls(n_robots, tuple(frozenset(t) for t in targets))


@dataclass(frozen=True)
class SwarmEstimate:
    """Joint pose estimate for a swarm: one pose and one 3x3 covariance per robot.

    Covariances must be symmetric within 1e-9 and positive semidefinite
    up to the same tolerance.
    """

    poses: tuple[Pose2D, ...]
    covariances: np.ndarray = field(repr=False)

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise ValueError("estimate must contain at least one pose")
        for p in poses:
            if not isinstance(p, Pose2D):
                raise TypeError(f"poses must be Pose2D, got {type(p).__name__}")
        cov = np.array(self.covariances, dtype=float)
        n = len(poses)
        if cov.shape != (n, 3, 3):
            raise ValueError(
                f"covariances must have shape ({n}, 3, 3), got {cov.shape}"
            )
        if not np.all(np.isfinite(cov)):
            raise ValueError("covariances must be finite")
        asym = np.max(np.abs(cov - np.transpose(cov, (0, 2, 1))))
        if asym > 1e-9:
            raise ValueError(f"covariances must be symmetric within 1e-9, worst {asym:.3e}")
        eigvals = np.linalg.eigvalsh(cov)
        if np.min(eigvals) < -1e-9:
            raise ValueError(
                f"covariances must be positive semidefinite, min eigenvalue {np.min(eigvals):.3e}"
            )
        cov.setflags(write=False)
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "covariances", cov)

    @property
    def n_robots(self) -> int:
        return len(self.poses)

    def positions(self) -> np.ndarray:
        """Positions as an (n_robots, 2) array."""
        return np.array([[p.x, p.y] for p in self.poses])

    def headings(self) -> np.ndarray:
        """Headings as an (n_robots,) array."""
        return np.array([p.theta for p in self.poses])


def poses_to_array(poses: Sequence[Pose2D]) -> np.ndarray:
    """Stack poses into an (n, 3) array of [x, y, theta] rows."""
    return np.array([[p.x, p.y, p.theta] for p in poses], dtype=float)


def array_to_poses(arr: np.ndarray) -> tuple[Pose2D, ...]:
    """Inverse of :func:`poses_to_array`; headings are re-normalized."""
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected shape (n, 3), got {arr.shape}")
    return tuple(Pose2D(float(r[0]), float(r[1]), float(r[2])) for r in arr)
