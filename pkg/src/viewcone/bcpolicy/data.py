"""Training-pair construction: encodings and sensor-frame action chunks.

Per demonstration step t the pair is (encoding at t, the next H action
deltas).  Actions are world-frame per-step deltas (dx, dy, wrapped dpsi)
derived from consecutive recorded states; each chunk's planar components are
rotated into the sensor frame of its anchor step, so the mapping from
encoding to chunk is well defined without absolute orientation in the
encoding.  Beliefs replay the recorded detections rather than recomputing
geometry.  Trajectories shorter than one chunk are padded by repeating their
final action.
"""

import math

import numpy as np

from ..expert import Belief, recent_belief, update_belief
from ..sim import Dataset, Trajectory
from ..world import wrap_angle
from .encode import encode_observation, encoding_dim

__all__ = ["action_deltas", "replayed_beliefs", "build_training_arrays"]


def action_deltas(traj: Trajectory) -> np.ndarray:
    """(n_controls, 3) world-frame per-step deltas (dx, dy, dpsi)."""
    out = np.zeros((traj.n_controls, 3))
    for i, (a, b) in enumerate(zip(traj.steps[:-1], traj.steps[1:])):
        out[i, 0] = b.state.p - a.state.p
        out[i, 1] = b.state.q - a.state.q
        out[i, 2] = wrap_angle(b.state.psi - a.state.psi)
    return out


def replayed_beliefs(traj: Trajectory) -> list[Belief]:
    """Belief after each recorded step's detections are absorbed."""
    belief = Belief()
    out = []
    for st in traj.steps:
        positions = traj.scenario.obstacle_positions_at(st.t)
        belief = update_belief(belief, st.detections, positions, st.t)
        out.append(belief)
    return out


def build_training_arrays(
    dataset: Dataset, k_nearest: int, horizon: int, belief_horizon: int | None = None
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Returns (encodings (N, D), chunks (N, H, 3), any_padded).

    ``belief_horizon`` restricts encoded obstacles to those seen within that
    many steps, mirroring a demonstrator that only reacts to recent
    sightings; None encodes the full persistent belief.
    """
    mode = dataset.meta.mode
    encs: list[np.ndarray] = []
    chunks: list[np.ndarray] = []
    padded = False
    for traj in dataset.trajectories:
        n = traj.n_controls
        if n == 0:
            continue
        if n < horizon:
            padded = True
        deltas = action_deltas(traj)
        beliefs = replayed_beliefs(traj)
        for t in range(n):
            st = traj.steps[t]
            enc = encode_observation(
                st.state,
                traj.scenario.goal,
                recent_belief(beliefs[t], st.t, belief_horizon),
                traj.scenario.bounds,
                k_nearest,
                mode,
            )
            chunk = np.empty((horizon, 3))
            for k in range(horizon):
                src = min(t + k, n - 1)
                chunk[k] = deltas[src]
            psi = st.state.psi
            c, s = math.cos(psi), math.sin(psi)
            x, y = chunk[:, 0].copy(), chunk[:, 1].copy()
            chunk[:, 0] = c * x + s * y
            chunk[:, 1] = -s * x + c * y
            encs.append(enc)
            chunks.append(chunk)
    if not encs:
        raise ValueError("dataset has no usable training steps")
    return np.array(encs), np.array(chunks), padded
