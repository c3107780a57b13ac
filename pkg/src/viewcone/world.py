"""Geometric ground truth: agent dynamics, the view cone, and detection sampling.

All operations are pure functions; randomness enters only through an explicit
numpy Generator.  Angles are always wrapped to (-pi, pi].
"""

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import InvalidStateError, SteeringSingularityError

__all__ = [
    "AgentState",
    "Control",
    "SensorParams",
    "ObstacleTrack",
    "Bounds",
    "Scenario",
    "DetectionSet",
    "wrap_angle",
    "wrap_angles",
    "step_unicycle",
    "step_bicycle",
    "step_pointmass",
    "in_cone",
    "visible_obstacles",
    "sample_detections",
    "obstacle_position",
]

_MODES = ("unicycle", "bicycle", "pointmass")


def wrap_angle(x: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.atan2(math.sin(x), math.cos(x))
    return math.pi if w <= -math.pi else w


def wrap_angles(x: np.ndarray) -> np.ndarray:
    """Vectorized wrap to (-pi, pi]."""
    w = np.arctan2(np.sin(x), np.cos(x))
    return np.where(w <= -np.pi, np.pi, w)


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidStateError(f"{name} contains non-finite value {v!r}")


@dataclass(frozen=True)
class AgentState:
    """Pose of the navigating agent.

    ``phi`` is the motion heading, ``psi`` the sensor orientation, and
    ``delta`` the steering angle (bicycle mode only; 0 otherwise).
    """

    p: float
    q: float
    phi: float = 0.0
    psi: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        _require_finite("AgentState", self.p, self.q, self.phi, self.psi, self.delta)

    @property
    def position(self) -> tuple[float, float]:
        return (self.p, self.q)

    def as_vector(self) -> list[float]:
        return [self.p, self.q, self.phi, self.psi, self.delta]

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "AgentState":
        p, q, phi, psi, delta = v
        return cls(p, q, phi, psi, delta)


# Wire layout of the control vector per dynamics mode.
_CONTROL_FIELDS = {
    "unicycle": ("v", "omega"),
    "bicycle": ("v", "omega", "dpsi"),
    "pointmass": ("dx", "dy", "dpsi"),
}


@dataclass(frozen=True)
class Control:
    """Control input; only the fields of the active dynamics mode are consumed.

    ``omega`` is the heading rate for the unicycle and the steering rate for
    the bicycle.  ``(dx, dy)`` are per-step displacements in point-mass mode;
    ``dpsi`` is the per-step sensor-orientation increment.
    """

    v: float = 0.0
    omega: float = 0.0
    dpsi: float = 0.0
    dx: float = 0.0
    dy: float = 0.0

    def as_vector(self, mode: str) -> list[float]:
        return [getattr(self, f) for f in _CONTROL_FIELDS[mode]]

    @classmethod
    def from_vector(cls, mode: str, v: Sequence[float]) -> "Control":
        fields = _CONTROL_FIELDS[mode]
        if len(v) != len(fields):
            raise ValueError(f"{mode} control vector needs {len(fields)} entries, got {len(v)}")
        return cls(**dict(zip(fields, (float(x) for x in v))))

    def is_finite(self, mode: str) -> bool:
        return all(math.isfinite(getattr(self, f)) for f in _CONTROL_FIELDS[mode])


@dataclass(frozen=True)
class SensorParams:
    """Cone range, cone half-angle, and per-step detection probability.

    ``theta_obs`` is the half-angle from the cone axis to its edge, so the
    full field of view spans ``2 * theta_obs``.
    """

    r_obs: float
    theta_obs: float
    p_obs: float

    def __post_init__(self):
        if not (math.isfinite(self.r_obs) and self.r_obs > 0):
            raise ValueError(f"r_obs must be > 0, got {self.r_obs}")
        if not (0 < self.theta_obs <= math.pi):
            raise ValueError(f"theta_obs must be in (0, pi], got {self.theta_obs}")
        if not (0 <= self.p_obs <= 1):
            raise ValueError(f"p_obs must be in [0, 1], got {self.p_obs}")


@dataclass(frozen=True, eq=False)
class ObstacleTrack:
    """Disc obstacle with a per-timestep position track.

    Lookups past the end of the track clamp to the final entry, so an
    obstacle is static after its recording ends.  A single-entry track is a
    static obstacle.
    """

    id: int
    radius: float
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ValueError("positions must be a non-empty (n, 2) array")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        object.__setattr__(self, "positions", pos)

    def position_at(self, t: int) -> tuple[float, float]:
        i = min(t, len(self.positions) - 1)
        return (float(self.positions[i, 0]), float(self.positions[i, 1]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObstacleTrack):
            return NotImplemented
        return (
            self.id == other.id
            and self.radius == other.radius
            and self.positions.shape == other.positions.shape
            and bool(np.all(self.positions == other.positions))
        )


def obstacle_position(track: ObstacleTrack, t: int) -> tuple[float, float]:
    """Track position at step t, clamped to the last recorded entry."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return track.position_at(t)


class Bounds(NamedTuple):
    """Axis-aligned rectangular arena."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin


@dataclass(frozen=True)
class Scenario:
    """One navigation task: goal, bounds, obstacle tracks, and timing."""

    goal: tuple[float, float]
    start: AgentState
    bounds: Bounds
    obstacles: tuple[ObstacleTrack, ...]
    h: float
    wheelbase_L: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "goal", (float(self.goal[0]), float(self.goal[1])))
        object.__setattr__(self, "bounds", Bounds(*self.bounds))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.h <= 0:
            raise ValueError("h must be > 0")
        if not self.bounds.contains(self.start.p, self.start.q):
            raise ValueError("start must lie inside bounds")
        if not self.bounds.contains(*self.goal):
            raise ValueError("goal must lie inside bounds")
        if self.wheelbase_L is not None and self.wheelbase_L <= 0:
            raise ValueError("wheelbase_L must be > 0")

    def obstacle_by_id(self, oid: int) -> ObstacleTrack:
        for o in self.obstacles:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def obstacle_positions_at(self, t: int) -> dict[int, tuple[float, float]]:
        return {o.id: o.position_at(t) for o in self.obstacles}


@dataclass(frozen=True)
class DetectionSet:
    """Sorted set of obstacle ids the agent noticed this step."""

    ids: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(sorted(set(int(i) for i in self.ids))))

    def __iter__(self) -> Iterator[int]:
        return iter(self.ids)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, oid: int) -> bool:
        return oid in self.ids

    def __bool__(self) -> bool:
        return bool(self.ids)


def step_unicycle(s: AgentState, u: Control, h: float) -> AgentState:
    """One unicycle step; the sensor axis stays locked to the heading."""
    _require_finite("control", u.v, u.omega)
    if not (math.isfinite(h) and h > 0):
        raise InvalidStateError(f"h must be finite and > 0, got {h}")
    p = s.p + h * u.v * math.cos(s.phi)
    q = s.q + h * u.v * math.sin(s.phi)
    phi = wrap_angle(s.phi + h * u.omega)
    return AgentState(p, q, phi, phi, s.delta)


def step_bicycle(s: AgentState, u: Control, h: float, L: float) -> AgentState:
    """One bicycle step with independently steered sensor orientation."""
    _require_finite("control", u.v, u.omega, u.dpsi)
    if not (math.isfinite(h) and h > 0):
        raise InvalidStateError(f"h must be finite and > 0, got {h}")
    if L <= 0:
        raise ValueError("wheelbase L must be > 0")
    if abs(s.delta) >= math.pi / 2:
        raise SteeringSingularityError(f"steering angle {s.delta} at or beyond pi/2")
    p = s.p + h * u.v * math.cos(s.phi)
    q = s.q + h * u.v * math.sin(s.phi)
    phi = wrap_angle(s.phi + h * (u.v / L) * math.tan(s.delta))
    delta = s.delta + h * u.omega
    psi = wrap_angle(s.psi + u.dpsi)
    return AgentState(p, q, phi, psi, delta)


def step_pointmass(s: AgentState, u: Control, v_max: float, h: float) -> AgentState:
    """One point-mass step; displacement is clamped to ``v_max * h``."""
    _require_finite("control", u.dx, u.dy, u.dpsi)
    if v_max <= 0:
        raise ValueError("v_max must be > 0")
    if not (math.isfinite(h) and h > 0):
        raise InvalidStateError(f"h must be finite and > 0, got {h}")
    dx, dy = u.dx, u.dy
    norm = math.hypot(dx, dy)
    limit = v_max * h
    if norm > limit:
        scale = limit / norm
        dx *= scale
        dy *= scale
    psi = wrap_angle(s.psi + u.dpsi)
    return AgentState(s.p + dx, s.q + dy, s.phi, psi, s.delta)


def in_cone(
    sensor_pos: tuple[float, float],
    sensor_psi: float,
    target: tuple[float, float],
    r_obs: float,
    theta_obs: float,
) -> bool:
    """Whether a point lies inside the view cone (center-point test).

    A target exactly at the sensor position counts as inside.
    """
    dp = target[0] - sensor_pos[0]
    dq = target[1] - sensor_pos[1]
    if dp == 0.0 and dq == 0.0:
        return True
    if math.hypot(dp, dq) > r_obs:
        return False
    bearing = wrap_angle(math.atan2(dq, dp) - sensor_psi)
    return abs(bearing) <= theta_obs


def visible_obstacles(
    state: AgentState, scenario: Scenario, t: int, sensor: SensorParams
) -> list[int]:
    """Ids of obstacles whose centers lie in the cone at step t, ascending."""
    pos = state.position
    out = [
        o.id
        for o in scenario.obstacles
        if in_cone(pos, state.psi, o.position_at(t), sensor.r_obs, sensor.theta_obs)
    ]
    out.sort()
    return out


def sample_detections(
    visible_ids: Sequence[int], p_obs: float, rng: np.random.Generator
) -> DetectionSet:
    """Bernoulli(p_obs) detection of each visible obstacle, id-ascending draw order."""
    if not (0 <= p_obs <= 1):
        raise ValueError(f"p_obs must be in [0, 1], got {p_obs}")
    detected = tuple(i for i in sorted(visible_ids) if rng.random() < p_obs)
    return DetectionSet(detected)
