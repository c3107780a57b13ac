"""Episode rollouts, random scenario generation, and dataset persistence.

Datasets are line-delimited JSON: a header line, then one trajectory object
per line.  Seeds derive from a master seed by counter, so generation is a
pure function of its arguments.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import DatasetParseError, ScenarioGenerationError, SchemaVersionError
from .expert import Belief, update_belief
from .world import (
    AgentState,
    Bounds,
    Control,
    DetectionSet,
    ObstacleTrack,
    Scenario,
    SensorParams,
    sample_detections,
    step_bicycle,
    step_pointmass,
    step_unicycle,
    visible_obstacles,
)

__all__ = [
    "Outcome",
    "TrajectoryStep",
    "Trajectory",
    "DatasetMeta",
    "Dataset",
    "Placement",
    "ScenarioConfig",
    "sample_scenario",
    "rollout",
    "generate_dataset",
    "write_dataset",
    "read_dataset",
    "replay_error",
]

SCHEMA_VERSION = 1
DEFAULT_GOAL_RADIUS = 10.0
DEFAULT_AGENT_RADIUS = 5.0


class Outcome(str, Enum):
    REACHED_GOAL = "reached_goal"
    TIMEOUT = "timeout"
    COLLISION = "collision"
    ERROR = "error"


class TrajectoryStep(NamedTuple):
    t: int
    state: AgentState
    control: Control
    detections: DetectionSet


@dataclass(frozen=True)
class Trajectory:
    """Recorded episode.  The final step holds the terminal state with a
    zero control; every earlier step's control was executed."""

    scenario: Scenario
    steps: tuple[TrajectoryStep, ...]
    outcome: Outcome
    scenario_id: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise ValueError("trajectory must contain at least one step")

    @property
    def n_controls(self) -> int:
        return len(self.steps) - 1

    def positions(self) -> np.ndarray:
        return np.array([[st.state.p, st.state.q] for st in self.steps])


@dataclass(frozen=True)
class DatasetMeta:
    mode: str
    h: float
    sensor: SensorParams | None = None
    seed: int | None = None
    angle_convention: str = "half"
    schema: int = SCHEMA_VERSION


@dataclass(frozen=True)
class Dataset:
    trajectories: tuple[Trajectory, ...]
    meta: DatasetMeta

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        if len(self.trajectories) < 1:
            raise ValueError("dataset must contain at least one trajectory")

    def __len__(self) -> int:
        return len(self.trajectories)


@dataclass(frozen=True)
class Placement:
    """Start/goal placement rule: a fixed point or uniform within a margin."""

    kind: str = "fixed"
    point: tuple[float, float] | None = None
    margin: float = 30.0

    def resolve(self, bounds: Bounds, rng: np.random.Generator) -> tuple[float, float]:
        if self.kind == "fixed":
            if self.point is None:
                raise ValueError("fixed placement needs a point")
            return (float(self.point[0]), float(self.point[1]))
        if self.kind == "uniform":
            x = rng.uniform(bounds.xmin + self.margin, bounds.xmax - self.margin)
            y = rng.uniform(bounds.ymin + self.margin, bounds.ymax - self.margin)
            return (float(x), float(y))
        raise ValueError(f"unknown placement kind {self.kind!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Sampler settings for random scenarios."""

    bounds: Bounds = Bounds(0.0, 0.0, 400.0, 400.0)
    n_obstacles: tuple[int, int] = (5, 9)
    obstacle_radius: tuple[float, float] = (5.0, 9.0)
    obstacle_speed: tuple[float, float] = (0.0, 0.0)
    start: Placement = Placement("fixed", (40.0, 40.0))
    goal: Placement = Placement("fixed", (360.0, 360.0))
    h: float = 0.1
    t_max: int = 600
    agent_radius: float = DEFAULT_AGENT_RADIUS
    clearance_factor: float = 1.5
    min_separation: float = 80.0
    start_heading: str = "goal"
    wheelbase_L: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "bounds", Bounds(*self.bounds))
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.h <= 0:
            raise ValueError("h must be > 0")
        for name in ("n_obstacles", "obstacle_radius", "obstacle_speed"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is empty: {lo} > {hi}")
        if self.n_obstacles[0] < 0:
            raise ValueError("n_obstacles must be >= 0")
        if self.start_heading not in ("goal", "random"):
            raise ValueError("start_heading must be 'goal' or 'random'")


def _reflecting_track(
    start: np.ndarray, velocity: np.ndarray, radius: float, bounds: Bounds, h: float, t_max: int
) -> np.ndarray:
    """Constant-speed track with elastic reflection off the inset bounds."""
    lo = np.array([bounds.xmin + radius, bounds.ymin + radius])
    hi = np.array([bounds.xmax - radius, bounds.ymax - radius])
    pos = start.astype(float).copy()
    vel = velocity.astype(float).copy()
    out = np.empty((t_max + 1, 2))
    out[0] = pos
    for t in range(1, t_max + 1):
        pos = pos + vel * h
        for k in (0, 1):
            if pos[k] < lo[k]:
                pos[k] = 2 * lo[k] - pos[k]
                vel[k] = -vel[k]
            elif pos[k] > hi[k]:
                pos[k] = 2 * hi[k] - pos[k]
                vel[k] = -vel[k]
        out[t] = pos
    return out


def sample_scenario(cfg: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    """Draw obstacle placements, then start/goal, enforcing clearances.

    Obstacle placement is rejection-sampled until its clearance from both the
    start and the goal (``clearance_factor * radius + agent_radius``) holds
    at t = 0; 1000 failures raise ``ScenarioGenerationError``.
    """
    bounds = cfg.bounds
    count = int(rng.integers(cfg.n_obstacles[0], cfg.n_obstacles[1] + 1))
    start_xy = cfg.start.resolve(bounds, rng)
    goal_xy = cfg.goal.resolve(bounds, rng)

    obstacles: list[ObstacleTrack] = []
    for oid in range(count):
        radius = float(rng.uniform(cfg.obstacle_radius[0], cfg.obstacle_radius[1]))
        clearance = cfg.clearance_factor * radius + cfg.agent_radius
        placed = None
        for _ in range(1000):
            x = rng.uniform(bounds.xmin + radius, bounds.xmax - radius)
            y = rng.uniform(bounds.ymin + radius, bounds.ymax - radius)
            if (
                math.hypot(x - start_xy[0], y - start_xy[1]) >= clearance
                and math.hypot(x - goal_xy[0], y - goal_xy[1]) >= clearance
                and all(
                    math.hypot(x - o.positions[0, 0], y - o.positions[0, 1])
                    >= cfg.min_separation
                    for o in obstacles
                )
            ):
                placed = np.array([x, y])
                break
        if placed is None:
            raise ScenarioGenerationError(
                f"could not place obstacle {oid} with clearance {clearance:.1f}"
            )
        speed = float(rng.uniform(cfg.obstacle_speed[0], cfg.obstacle_speed[1]))
        if speed > 0:
            angle = rng.uniform(-math.pi, math.pi)
            vel = speed * np.array([math.cos(angle), math.sin(angle)])
            track = _reflecting_track(placed, vel, radius, bounds, cfg.h, cfg.t_max)
        else:
            track = placed.reshape(1, 2)
        obstacles.append(ObstacleTrack(oid, radius, track))

    if cfg.start_heading == "random":
        heading = float(rng.uniform(-math.pi, math.pi))
    else:
        heading = math.atan2(goal_xy[1] - start_xy[1], goal_xy[0] - start_xy[0])
    start = AgentState(start_xy[0], start_xy[1], heading, heading, 0.0)
    return Scenario(goal_xy, start, bounds, tuple(obstacles), cfg.h, cfg.wheelbase_L)


def _apply_dynamics(
    state: AgentState, u: Control, scenario: Scenario, mode: str, v_max: float | None
) -> AgentState:
    if mode == "unicycle":
        return step_unicycle(state, u, scenario.h)
    if mode == "bicycle":
        if scenario.wheelbase_L is None:
            raise ValueError("bicycle rollout needs scenario.wheelbase_L")
        return step_bicycle(state, u, scenario.h, scenario.wheelbase_L)
    if mode == "pointmass":
        if v_max is None:
            raise ValueError("pointmass rollout needs v_max")
        return step_pointmass(state, u, v_max, scenario.h)
    raise ValueError(f"unknown dynamics mode {mode!r}")


def rollout(
    scenario: Scenario,
    sensor: SensorParams,
    policy: Callable[[AgentState, Belief, Scenario, int], Control],
    rng: np.random.Generator,
    t_max: int,
    mode: str = "unicycle",
    *,
    goal_radius: float = DEFAULT_GOAL_RADIUS,
    agent_radius: float = DEFAULT_AGENT_RADIUS,
    v_max: float | None = None,
    scenario_id: int | None = None,
) -> Trajectory:
    """Run one episode.

    Every step observes (visibility, then Bernoulli detection in ascending-id
    order), updates the persistent belief, then checks termination before
    querying the policy.  The terminal step is recorded with a zero control.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    state = scenario.start
    belief = Belief()
    steps: list[TrajectoryStep] = []
    outcome = Outcome.TIMEOUT
    for t in range(t_max + 1):
        positions = scenario.obstacle_positions_at(t)
        visible = visible_obstacles(state, scenario, t, sensor)
        z = sample_detections(visible, sensor.p_obs, rng)
        belief = update_belief(belief, z, positions, t)

        d_goal = math.hypot(state.p - scenario.goal[0], state.q - scenario.goal[1])
        collided = any(
            math.hypot(state.p - positions[o.id][0], state.q - positions[o.id][1])
            < o.radius + agent_radius
            for o in scenario.obstacles
        )
        if d_goal <= goal_radius:
            outcome = Outcome.REACHED_GOAL
            steps.append(TrajectoryStep(t, state, Control(), z))
            break
        if collided:
            outcome = Outcome.COLLISION
            steps.append(TrajectoryStep(t, state, Control(), z))
            break
        if t == t_max:
            outcome = Outcome.TIMEOUT
            steps.append(TrajectoryStep(t, state, Control(), z))
            break

        u = policy(state, belief, scenario, t)
        if not u.is_finite(mode):
            outcome = Outcome.ERROR
            steps.append(TrajectoryStep(t, state, Control(), z))
            break
        steps.append(TrajectoryStep(t, state, u, z))
        state = _apply_dynamics(state, u, scenario, mode, v_max)

    return Trajectory(scenario, tuple(steps), outcome, scenario_id)


def _trajectory_seed(seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, index, stream))))


def _generate_one(args) -> Trajectory:
    cfg, sensor, policy, seed, index, mode, goal_radius, v_max, scenario = args
    if scenario is None:
        scenario = sample_scenario(cfg, _trajectory_seed(seed, index, 0))
    return rollout(
        scenario,
        sensor,
        policy,
        _trajectory_seed(seed, index, 1),
        cfg.t_max,
        mode,
        goal_radius=goal_radius,
        agent_radius=cfg.agent_radius,
        v_max=v_max,
        scenario_id=index,
    )


def generate_dataset(
    cfg: ScenarioConfig,
    sensor: SensorParams,
    policy: Callable[[AgentState, Belief, Scenario, int], Control],
    n: int,
    seed: int,
    *,
    mode: str = "unicycle",
    goal_radius: float = DEFAULT_GOAL_RADIUS,
    v_max: float | None = None,
    scenarios: Sequence[Scenario] | None = None,
    jobs: int = 1,
) -> Dataset:
    """N independent scenario+rollout pairs with counter-derived seeds.

    Per index i, the scenario uses stream (seed, i, 0) and the rollout stream
    (seed, i, 1), so regeneration with the same master seed aligns detection
    draws even when scenarios are supplied externally.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if scenarios is not None and len(scenarios) < n:
        raise ValueError(f"need {n} scenarios, got {len(scenarios)}")
    work = [
        (
            cfg,
            sensor,
            policy,
            seed,
            i,
            mode,
            goal_radius,
            v_max,
            scenarios[i] if scenarios is not None else None,
        )
        for i in range(n)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trajectories = list(pool.map(_generate_one, work, chunksize=8))
    else:
        trajectories = [_generate_one(w) for w in work]
    meta = DatasetMeta(mode=mode, h=cfg.h, sensor=sensor, seed=seed)
    return Dataset(tuple(trajectories), meta)


# ---------------------------------------------------------------------------
# Persistence


def _scenario_obj(traj: Trajectory) -> dict:
    sc = traj.scenario
    return {
        "goal": [sc.goal[0], sc.goal[1]],
        "bounds": list(sc.bounds),
        "obstacles": [
            {"id": o.id, "radius": o.radius, "track": o.positions.tolist()}
            for o in sc.obstacles
        ],
        "L": sc.wheelbase_L,
    }


def write_dataset(dataset: Dataset, path) -> None:
    meta = dataset.meta
    header = {
        "schema": meta.schema,
        "mode": meta.mode,
        "angle_convention": meta.angle_convention,
        "h": meta.h,
        "sensor": (
            {
                "r_obs": meta.sensor.r_obs,
                "theta_obs": meta.sensor.theta_obs,
                "p_obs": meta.sensor.p_obs,
            }
            if meta.sensor is not None
            else None
        ),
        "seed": meta.seed,
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, separators=(",", ":")) + "\n")
        for traj in dataset.trajectories:
            obj = {
                "scenario": _scenario_obj(traj),
                "steps": [
                    {
                        "t": st.t,
                        "s": st.state.as_vector(),
                        "u": st.control.as_vector(meta.mode),
                        "z": list(st.detections.ids),
                    }
                    for st in traj.steps
                ],
                "outcome": traj.outcome.value,
            }
            if traj.scenario_id is not None:
                obj["scenario_id"] = traj.scenario_id
            f.write(json.dumps(obj, separators=(",", ":")) + "\n")


def _parse_trajectory(obj: dict, mode: str, h: float) -> Trajectory:
    sc = obj["scenario"]
    steps_raw = obj["steps"]
    if not steps_raw:
        raise ValueError("trajectory has no steps")
    obstacles = tuple(
        ObstacleTrack(int(o["id"]), float(o["radius"]), np.asarray(o["track"], dtype=float))
        for o in sc["obstacles"]
    )
    start = AgentState.from_vector(steps_raw[0]["s"])
    scenario = Scenario(
        (float(sc["goal"][0]), float(sc["goal"][1])),
        start,
        Bounds(*(float(b) for b in sc["bounds"])),
        obstacles,
        h,
        sc.get("L"),
    )
    steps = tuple(
        TrajectoryStep(
            int(s["t"]),
            AgentState.from_vector(s["s"]),
            Control.from_vector(mode, s["u"]),
            DetectionSet(tuple(int(i) for i in s["z"])),
        )
        for s in steps_raw
    )
    sid = obj.get("scenario_id")
    return Trajectory(scenario, steps, Outcome(obj["outcome"]), sid)


def read_dataset(path) -> Dataset:
    """Parse a dataset file, naming the offending line on failure."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise DatasetParseError(f"{path}:1: empty file")
    try:
        header = json.loads(lines[0])
        schema = header["schema"]
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise DatasetParseError(f"{path}:1: bad header ({e})") from e
    if schema != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported schema version {schema}")
    mode = header.get("mode")
    if mode not in ("unicycle", "bicycle", "pointmass"):
        raise DatasetParseError(f"{path}:1: unknown mode {mode!r}")
    h = float(header["h"])
    sensor = None
    if header.get("sensor") is not None:
        s = header["sensor"]
        sensor = SensorParams(float(s["r_obs"]), float(s["theta_obs"]), float(s["p_obs"]))
    meta = DatasetMeta(
        mode=mode,
        h=h,
        sensor=sensor,
        seed=header.get("seed"),
        angle_convention=header.get("angle_convention", "half"),
    )
    trajectories = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            trajectories.append(_parse_trajectory(json.loads(line), mode, h))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, IndexError) as e:
            raise DatasetParseError(f"{path}:{lineno}: {e}") from e
    return Dataset(tuple(trajectories), meta)


def replay_error(traj: Trajectory, mode: str, v_max: float | None = None) -> float:
    """Max absolute state-replay error: re-apply recorded controls and compare."""
    worst = 0.0
    for a, b in zip(traj.steps[:-1], traj.steps[1:]):
        nxt = _apply_dynamics(a.state, a.control, traj.scenario, mode, v_max)
        err = max(
            abs(nxt.p - b.state.p),
            abs(nxt.q - b.state.q),
            abs(nxt.phi - b.state.phi),
            abs(nxt.psi - b.state.psi),
            abs(nxt.delta - b.state.delta),
        )
        worst = max(worst, err)
    return worst
