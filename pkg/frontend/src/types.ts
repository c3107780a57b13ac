/** Shared types for the demonstration-collection game. */

export interface Vec2 {
  x: number;
  y: number;
}

export interface Bounds {
  xmin: number;
  ymin: number;
  xmax: number;
  ymax: number;
}

export interface ObstacleSpec {
  id: number;
  radius: number;
  /** Per-tick positions; lookups past the end clamp to the last entry. */
  track: [number, number][];
}

export interface SessionConfig {
  bounds: Bounds;
  start: Vec2;
  startPsi: number;
  goal: Vec2;
  obstacles: ObstacleSpec[];
  rObs: number;
  thetaObs: number;
  vMax: number;
  /** Logical ticks per second; fixed for a session. */
  tickRate: number;
  /** Max sensor swing per tick, radians. */
  psiRate: number;
  goalRadius: number;
  agentRadius: number;
  maxTicks: number;
  participant: string;
}

export interface InputState {
  /** Keyboard axes in [-1, 1]; +x right, +y up (world frame). */
  axisX: number;
  axisY: number;
  /** Mouse position in world coordinates, or null if unknown. */
  mouse: Vec2 | null;
}

export interface RecordedStep {
  t: number;
  /** Agent pose [p, q, phi, psi, delta]; phi and delta stay 0 (point mass). */
  s: [number, number, number, number, number];
  /** Executed control [dx, dy, dpsi]; zeros on the terminal record. */
  u: [number, number, number];
  /** Ids of obstacles inside the cone this tick (vision is deterministic). */
  z: number[];
  /** Obstacle positions this tick, for rendering and analysis. */
  obstacles: [number, number][];
}

export type Outcome = "reached_goal" | "collision" | "timeout";

export type SessionStatus = "running" | Outcome;

export interface DrawItem {
  kind: "agent" | "goal" | "obstacle" | "cone" | "bounds";
  x: number;
  y: number;
  radius?: number;
  psi?: number;
  id?: number;
}

export const DEFAULTS = {
  rObs: 100,
  thetaObs: 0.45,
  vMax: 40,
  tickRate: 20,
  psiRate: 0.25,
  goalRadius: 10,
  agentRadius: 5,
  maxTicks: 2400,
};
