"""Receding-horizon execution of the diffusion policy inside the simulator."""

import math
from dataclasses import replace

import numpy as np

from ..expert import Belief, recent_belief
from ..sim import DEFAULT_AGENT_RADIUS, DEFAULT_GOAL_RADIUS, Trajectory, rollout
from ..world import AgentState, Control, Scenario, SensorParams, wrap_angle
from .diffusion import DiffusionConfig, DiffusionModel, sample_chunk
from .encode import encode_observation

__all__ = ["action_to_bicycle_control", "ChunkPolicy", "bc_rollout"]


def action_to_bicycle_control(
    delta_xy, state: AgentState, k_v: float, k_omega: float
) -> tuple[float, float]:
    """Map a planar displacement to (v, omega) for the bicycle.

    The heading error is wrapped, so a desired heading just across the
    +/-pi seam produces a small turn command rather than a full spin.
    A zero displacement gives v = 0 with the atan2(0, 0) = 0 convention.
    """
    if k_v <= 0 or k_omega <= 0:
        raise ValueError("k_v and k_omega must be > 0")
    dx, dy = float(delta_xy[0]), float(delta_xy[1])
    v = k_v * math.hypot(dx, dy)
    phi_d = math.atan2(dy, dx)
    omega = k_omega * wrap_angle(phi_d - state.phi)
    return v, omega


class ChunkPolicy:
    """Samples an action chunk, executes its first ``exec_steps`` actions,
    then re-encodes and re-samples.

    Chunks come out of the model in the sensor frame of the step they were
    sampled at; rows are rotated back to world coordinates by that anchor
    orientation before execution.

    With ``psi_mode="fixed"`` the agent's actual gaze sweeps at a constant
    ``psi_rate`` per step, independent of the environment (the
    no-observation-model baseline).  Locomotion stays intact: the policy
    keeps integrating its predicted orientation increments into a virtual
    frame used for encoding and action rotation, so only the sensing
    direction, and with it detection and belief quality, is degraded.
    """

    def __init__(
        self,
        model: DiffusionModel,
        cfg: DiffusionConfig,
        rng: np.random.Generator,
        mode: str = "pointmass",
        exec_steps: int = 4,
        psi_mode: str = "model",
        psi_rate: float = 0.05,
        k_v: float | None = None,
        k_omega: float | None = None,
    ):
        if mode not in ("pointmass", "bicycle"):
            raise ValueError(f"unsupported BC rollout mode {mode!r}")
        if psi_mode not in ("model", "fixed"):
            raise ValueError(f"psi_mode must be 'model' or 'fixed', got {psi_mode!r}")
        self.model = model
        self.cfg = cfg
        self.rng = rng
        self.mode = mode
        self.exec_steps = max(1, min(exec_steps, model.horizon))
        self.psi_mode = psi_mode
        self.psi_rate = psi_rate
        self.k_v = k_v
        self.k_omega = k_omega
        self._buffer: list[np.ndarray] = []
        self._virtual_psi: float | None = None

    def _frame_state(self, state: AgentState) -> AgentState:
        if self.psi_mode == "model":
            return state
        if self._virtual_psi is None:
            self._virtual_psi = state.psi
        return replace(state, psi=self._virtual_psi)

    def _refill(self, state: AgentState, belief: Belief, scenario: Scenario, t: int) -> None:
        framed = self._frame_state(state)
        seen = recent_belief(belief, t, self.model.belief_horizon)
        enc = encode_observation(
            framed, scenario.goal, seen, scenario.bounds, self.model.k_nearest, self.mode
        )
        chunk = sample_chunk(self.model, enc, self.cfg, self.rng)
        c, s = math.cos(framed.psi), math.sin(framed.psi)
        world = chunk.copy()
        world[:, 0] = c * chunk[:, 0] - s * chunk[:, 1]
        world[:, 1] = s * chunk[:, 0] + c * chunk[:, 1]
        self._buffer = [world[k] for k in range(self.exec_steps)]

    def __call__(self, state: AgentState, belief: Belief, scenario: Scenario, t: int) -> Control:
        if not self._buffer:
            self._refill(state, belief, scenario, t)
        row = self._buffer.pop(0)
        if self.psi_mode == "fixed":
            self._virtual_psi = wrap_angle(self._virtual_psi + float(row[2]))
            dpsi = self.psi_rate
        else:
            dpsi = float(row[2])
        if self.mode == "pointmass":
            return Control(dx=float(row[0]), dy=float(row[1]), dpsi=dpsi)
        k_v = self.k_v if self.k_v is not None else 1.0 / scenario.h
        k_omega = self.k_omega if self.k_omega is not None else 1.0
        v, omega = action_to_bicycle_control(row[:2], state, k_v, k_omega)
        return Control(v=v, omega=omega, dpsi=dpsi)


def bc_rollout(
    model: DiffusionModel,
    scenario: Scenario,
    sensor: SensorParams,
    cfg: DiffusionConfig,
    rng: np.random.Generator,
    mode: str = "pointmass",
    *,
    t_max: int = 600,
    v_max: float = 20.0,
    exec_steps: int = 4,
    psi_mode: str = "model",
    psi_rate: float = 0.05,
    k_v: float | None = None,
    k_omega: float | None = None,
    goal_radius: float = DEFAULT_GOAL_RADIUS,
    agent_radius: float = DEFAULT_AGENT_RADIUS,
    scenario_id: int | None = None,
) -> Trajectory:
    """One diffusion-policy episode; detections and chunk sampling use
    independent streams spawned from ``rng`` so runs are reproducible."""
    detection_rng, chunk_rng = rng.spawn(2)
    policy = ChunkPolicy(
        model,
        cfg,
        chunk_rng,
        mode=mode,
        exec_steps=exec_steps,
        psi_mode=psi_mode,
        psi_rate=psi_rate,
        k_v=k_v,
        k_omega=k_omega,
    )
    return rollout(
        scenario,
        sensor,
        policy,
        detection_rng,
        t_max,
        mode,
        goal_radius=goal_radius,
        agent_radius=agent_radius,
        v_max=v_max,
        scenario_id=scenario_id,
    )
