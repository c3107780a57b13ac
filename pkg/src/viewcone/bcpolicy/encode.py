"""Fixed-size observation encoding for the conditional denoiser.

Layout: [relative goal (2), relative-heading cos/sin (2), K nearest believed
obstacles as (relative position, validity flag) (3K), boundary distances (4)].
Goal and obstacle offsets are expressed in the sensor frame (rotated by
-psi), and the heading block encodes the motion heading relative to the
sensor axis, so everything except the boundary block is invariant under a
common rotation of the world and the sensor.  Boundary distances stay
axis-aligned because the arena rectangle is.
"""

import math

import numpy as np

from ..expert import Belief
from ..world import AgentState, Bounds, wrap_angle

__all__ = ["encoding_dim", "encode_observation"]


def encoding_dim(k_nearest: int) -> int:
    return 2 + 2 + 3 * k_nearest + 4


def _encoding_heading(state: AgentState, mode: str) -> float:
    # The point mass has no motion heading; its sensor axis stands in, which
    # pins the heading block to (1, 0) exactly as in heading-locked unicycle
    # data.
    return state.psi if mode == "pointmass" else state.phi


def encode_observation(
    state: AgentState,
    goal: tuple[float, float],
    belief: Belief,
    bounds: Bounds,
    k_nearest: int = 5,
    mode: str = "unicycle",
) -> np.ndarray:
    cos_p, sin_p = math.cos(state.psi), math.sin(state.psi)

    def to_sensor_frame(wx: float, wy: float) -> tuple[float, float]:
        return (cos_p * wx + sin_p * wy, -sin_p * wx + cos_p * wy)

    out = np.zeros(encoding_dim(k_nearest))
    out[0], out[1] = to_sensor_frame(goal[0] - state.p, goal[1] - state.q)
    rel_heading = wrap_angle(_encoding_heading(state, mode) - state.psi)
    out[2], out[3] = math.cos(rel_heading), math.sin(rel_heading)

    ranked = sorted(
        belief.known_obstacles.items(),
        key=lambda kv: (math.hypot(kv[1][0] - state.p, kv[1][1] - state.q), kv[0]),
    )
    for slot, (oid, (ox, oy)) in enumerate(ranked[:k_nearest]):
        base = 4 + 3 * slot
        out[base], out[base + 1] = to_sensor_frame(ox - state.p, oy - state.q)
        out[base + 2] = 1.0

    b = 4 + 3 * k_nearest
    out[b] = state.p - bounds.xmin
    out[b + 1] = state.q - bounds.ymin
    out[b + 2] = bounds.xmax - state.p
    out[b + 3] = bounds.ymax - state.q
    return out
