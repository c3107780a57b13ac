/**
 * Pure game core: session state, the fixed logical tick, and the draw list.
 *
 * The tick is the only mutation point.  Rendering and input live in separate
 * adapters, so a session can run headless (tests, fixture generation)
 * byte-identically to the browser.
 */

import { clampDisplacement, inCone, turnToward, wrapAngle } from "./geometry.js";
import type {
  DrawItem,
  InputState,
  RecordedStep,
  SessionConfig,
  SessionStatus,
} from "./types.js";

export interface Session {
  config: SessionConfig;
  tick: number;
  x: number;
  y: number;
  psi: number;
  status: SessionStatus;
  steps: RecordedStep[];
}

export function createSession(config: SessionConfig): Session {
  return {
    config,
    tick: 0,
    x: config.start.x,
    y: config.start.y,
    psi: wrapAngle(config.startPsi),
    status: "running",
    steps: [],
  };
}

export function obstaclePosition(
  session: Session,
  index: number,
  t: number,
): [number, number] {
  const track = session.config.obstacles[index].track;
  const i = Math.min(t, track.length - 1);
  return [track[i][0], track[i][1]];
}

function visibleIds(session: Session, t: number): number[] {
  const out: number[] = [];
  const { rObs, thetaObs } = session.config;
  session.config.obstacles.forEach((o, i) => {
    const [ox, oy] = obstaclePosition(session, i, t);
    if (inCone(session.x, session.y, session.psi, ox, oy, rObs, thetaObs)) {
      out.push(o.id);
    }
  });
  out.sort((a, b) => a - b);
  return out;
}

function terminalStatus(session: Session, t: number): SessionStatus {
  const cfg = session.config;
  const dGoal = Math.hypot(session.x - cfg.goal.x, session.y - cfg.goal.y);
  if (dGoal <= cfg.goalRadius) return "reached_goal";
  for (let i = 0; i < cfg.obstacles.length; i++) {
    const [ox, oy] = obstaclePosition(session, i, t);
    if (Math.hypot(session.x - ox, session.y - oy) < cfg.obstacles[i].radius + cfg.agentRadius) {
      return "collision";
    }
  }
  if (t >= cfg.maxTicks) return "timeout";
  return "running";
}

function record(session: Session, t: number, u: [number, number, number], z: number[]): void {
  session.steps.push({
    t,
    s: [session.x, session.y, 0, session.psi, 0],
    u,
    z,
    obstacles: session.config.obstacles.map((_, i) => obstaclePosition(session, i, t)),
  });
}

/**
 * Advance one logical tick: observe, terminate or act, record, move.
 *
 * Keyboard axes become a displacement clamped to vMax * h; the mouse bearing
 * becomes the sensor target, rate-limited per tick.  The terminal tick is
 * recorded with a zero control, matching the dataset convention.
 */
export function gameTick(session: Session, input: InputState): SessionStatus {
  if (session.status !== "running") return session.status;
  const cfg = session.config;
  const t = session.tick;
  const h = 1 / cfg.tickRate;

  const z = visibleIds(session, t);
  const status = terminalStatus(session, t);
  if (status !== "running") {
    record(session, t, [0, 0, 0], z);
    session.status = status;
    return status;
  }

  const [dx, dy] = clampDisplacement(
    input.axisX * cfg.vMax * h,
    input.axisY * cfg.vMax * h,
    cfg.vMax,
    h,
  );
  let dpsi = 0;
  if (input.mouse !== null) {
    const target = Math.atan2(input.mouse.y - session.y, input.mouse.x - session.x);
    const next = turnToward(session.psi, target, cfg.psiRate);
    dpsi = wrapAngle(next - session.psi);
  }

  record(session, t, [dx, dy, dpsi], z);
  session.x += dx;
  session.y += dy;
  session.psi = wrapAngle(session.psi + dpsi);
  session.tick = t + 1;
  return "running";
}

/**
 * What may be shown this frame.  Obstacles appear only while inside the
 * cone (fog of war); the goal, the agent, the cone, and the arena are
 * always visible.
 */
export function drawList(session: Session): DrawItem[] {
  const cfg = session.config;
  const t = Math.min(session.tick, cfg.maxTicks);
  const items: DrawItem[] = [
    { kind: "bounds", x: cfg.bounds.xmin, y: cfg.bounds.ymin },
    { kind: "goal", x: cfg.goal.x, y: cfg.goal.y, radius: cfg.goalRadius },
    { kind: "cone", x: session.x, y: session.y, psi: session.psi, radius: cfg.rObs },
    { kind: "agent", x: session.x, y: session.y, radius: cfg.agentRadius, psi: session.psi },
  ];
  cfg.obstacles.forEach((o, i) => {
    const [ox, oy] = obstaclePosition(session, i, t);
    if (inCone(session.x, session.y, session.psi, ox, oy, cfg.rObs, cfg.thetaObs)) {
      items.push({ kind: "obstacle", x: ox, y: oy, radius: o.radius, id: o.id });
    }
  });
  return items;
}
