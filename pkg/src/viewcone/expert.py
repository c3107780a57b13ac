"""The known demonstrator: an attractor-repulsor controller over believed obstacles.

The controller sums a unit attraction toward the goal and inverse-square
repulsions from every remembered obstacle closer than the cutoff ``d0``.
A Gaussian kernel around the deterministic control makes action likelihoods
well-defined.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingObstacleError
from .world import AgentState, Control, DetectionSet, Scenario, wrap_angle

__all__ = [
    "Belief",
    "ExpertGains",
    "LikelihoodKernel",
    "ExpertPolicy",
    "update_belief",
    "potential_field_control",
    "nominal_action",
    "kernel_density",
]

# Collinearity tolerance for the attraction/repulsion tie-break (|sin| of the
# angle between the unit vectors).
_COLLINEAR_TOL = 1e-9


@dataclass(frozen=True)
class ExpertGains:
    """Controller constants.

    ``d0`` is the repulsion cutoff: obstacles at distance >= d0 exert no
    force.  It defaults to well beyond the sensing ranges of interest so that
    every remembered obstacle influences the control, which is what makes the
    sensing range observable from the outside.  ``rep_cap`` bounds the
    repulsion magnitude when the agent sits (numerically) on an obstacle
    center; ``stop_radius`` is the radius inside which the controller parks.
    """

    k_att: float = 1.0
    k_rep: float = 8.0e4
    d0: float = 150.0
    v_max: float = 12.0
    k_heading: float = 2.0
    stop_radius: float = 2.0
    rep_cap: float = 1.0e6
    memory_horizon: int | None = 0

    def __post_init__(self):
        for name in ("k_att", "k_rep", "d0", "v_max", "k_heading", "rep_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.stop_radius < 0:
            raise ValueError("stop_radius must be >= 0")
        if self.memory_horizon is not None and self.memory_horizon < 0:
            raise ValueError("memory_horizon must be >= 0 or None")


@dataclass(frozen=True)
class LikelihoodKernel:
    """Isotropic Gaussian bandwidth over (normalized) control space."""

    sigma_u: float = 0.05

    def __post_init__(self):
        if self.sigma_u <= 0:
            raise ValueError("sigma_u must be > 0")


@dataclass(frozen=True)
class Belief:
    """Persistent memory of detected obstacles: last-seen position per id."""

    known_obstacles: dict[int, tuple[float, float]] = field(default_factory=dict)
    last_seen_step: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.known_obstacles) != set(self.last_seen_step):
            raise ValueError("known_obstacles and last_seen_step must share keys")


def update_belief(
    b: Belief,
    detections: DetectionSet,
    obstacle_positions: dict[int, tuple[float, float]],
    t: int,
) -> Belief:
    """Insert or refresh every detected obstacle; nothing is ever evicted."""
    known = dict(b.known_obstacles)
    seen = dict(b.last_seen_step)
    for oid in detections:
        if oid not in obstacle_positions:
            raise MissingObstacleError(oid)
        x, y = obstacle_positions[oid]
        known[oid] = (float(x), float(y))
        seen[oid] = t
    return Belief(known, seen)


def _repulsion(pos: np.ndarray, obst: np.ndarray, g: ExpertGains) -> np.ndarray:
    """Repulsive force from one obstacle; zero at or beyond the cutoff d0."""
    away = pos - obst
    d = float(np.hypot(away[0], away[1]))
    if d >= g.d0:
        return np.zeros(2)
    if d < 1e-9:
        # Coincident with the obstacle center: capped magnitude, fixed direction.
        return np.array([g.rep_cap, 0.0])
    mag = min(g.rep_cap, g.k_rep * (1.0 / d - 1.0 / g.d0) / (d * d))
    return (mag / d) * away


def potential_field_control(
    s: AgentState, goal: tuple[float, float], b: Belief, g: ExpertGains
) -> Control:
    """Deterministic attractor-repulsor control (v, omega) for the unicycle.

    Inside ``stop_radius`` of the goal the controller parks.  When the summed
    repulsion is exactly antiparallel to the attraction, a fixed lateral
    nudge (+pi/2 from the repulsion direction, magnitude 1e-3 * k_rep)
    breaks the tie deterministically.
    """
    pos = np.array([s.p, s.q])
    to_goal = np.asarray(goal, dtype=float) - pos
    d_goal = float(np.hypot(to_goal[0], to_goal[1]))
    if d_goal <= g.stop_radius:
        return Control(v=0.0, omega=0.0)
    if d_goal < 1e-9:
        raise ValueError("agent is exactly at the goal; control undefined")

    att = (g.k_att / d_goal) * to_goal
    rep = np.zeros(2)
    for obst in b.known_obstacles.values():
        rep += _repulsion(pos, np.asarray(obst, dtype=float), g)

    rep_norm = float(np.hypot(rep[0], rep[1]))
    if rep_norm > 0.0:
        a_unit = att / g.k_att
        r_unit = rep / rep_norm
        cross = a_unit[0] * r_unit[1] - a_unit[1] * r_unit[0]
        dot = a_unit[0] * r_unit[0] + a_unit[1] * r_unit[1]
        if dot < 0.0 and abs(cross) <= _COLLINEAR_TOL:
            nudge = 1e-3 * g.k_rep * np.array([-r_unit[1], r_unit[0]])
            rep = rep + nudge

    force = att + rep
    f_norm = float(np.hypot(force[0], force[1]))
    v = min(g.v_max, f_norm * g.v_max)
    omega = g.k_heading * wrap_angle(math.atan2(force[1], force[0]) - s.phi)
    return Control(v=v, omega=omega)


def nominal_action(
    s: AgentState,
    z: DetectionSet,
    scenario: Scenario,
    t: int,
    g: ExpertGains,
) -> Control:
    """Expert control given only this step's detections (memoryless belief).

    Used inside the likelihood, where the per-step action marginal must be a
    function of the current state and observation alone.
    """
    positions = scenario.obstacle_positions_at(t)
    belief = update_belief(Belief(), z, positions, t)
    return potential_field_control(s, scenario.goal, belief, g)


def recent_belief(b: Belief, t: int, horizon: int | None) -> Belief:
    """Restrict a belief to obstacles seen within the last ``horizon`` steps.

    ``None`` keeps everything.  Belief storage itself never evicts; this is a
    view used when acting, so stale sightings stop steering the agent.
    """
    if horizon is None:
        return b
    keep = {oid for oid, seen in b.last_seen_step.items() if t - seen <= horizon}
    return Belief(
        {oid: b.known_obstacles[oid] for oid in keep},
        {oid: b.last_seen_step[oid] for oid in keep},
    )


class ExpertPolicy:
    """Rollout-facing wrapper: attractor-repulsor over recently seen obstacles."""

    def __init__(self, gains: ExpertGains | None = None):
        self.gains = gains if gains is not None else ExpertGains()

    def __call__(self, state: AgentState, belief: Belief, scenario: Scenario, t: int) -> Control:
        acting = recent_belief(belief, t, self.gains.memory_horizon)
        return potential_field_control(state, scenario.goal, acting, self.gains)


def kernel_density(u_observed, u_nominal, k: LikelihoodKernel) -> float:
    """Isotropic Gaussian density of ``u_observed`` around ``u_nominal``.

    Both arguments are vectors over the active control dimensions; they must
    have the same length m.
    """
    a = np.asarray(u_observed, dtype=float).ravel()
    b = np.asarray(u_nominal, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"control dimension mismatch: {a.shape} vs {b.shape}")
    m = a.size
    sq = float(np.sum((a - b) ** 2))
    var = k.sigma_u * k.sigma_u
    return (2.0 * math.pi * var) ** (-m / 2.0) * math.exp(-sq / (2.0 * var))
