/**
 * Session export in the shared dataset format: one header line, one
 * trajectory line.  Byte-compatible with the simulator's reader; numbers are
 * serialized with JavaScript's shortest-round-trip formatting, which both
 * sides parse to identical doubles.
 */

import type { Session } from "./game.js";
import type { Outcome } from "./types.js";

export function exportSession(session: Session): string {
  if (session.status === "running" || session.steps.length === 0) {
    throw new Error("session still running or empty; nothing to export");
  }
  const cfg = session.config;
  const header = {
    schema: 1,
    mode: "pointmass",
    angle_convention: "half",
    h: 1 / cfg.tickRate,
    // Vision inside the cone is deterministic for a human player; their own
    // perception supplies any misses.
    sensor: { r_obs: cfg.rObs, theta_obs: cfg.thetaObs, p_obs: 1 },
    seed: null,
  };
  const trajectory = {
    scenario: {
      goal: [cfg.goal.x, cfg.goal.y],
      bounds: [cfg.bounds.xmin, cfg.bounds.ymin, cfg.bounds.xmax, cfg.bounds.ymax],
      obstacles: cfg.obstacles.map((o) => ({
        id: o.id,
        radius: o.radius,
        track: o.track,
      })),
      L: null,
    },
    steps: session.steps.map((st) => ({ t: st.t, s: st.s, u: st.u, z: st.z })),
    outcome: session.status as Outcome,
  };
  return JSON.stringify(header) + "\n" + JSON.stringify(trajectory) + "\n";
}
