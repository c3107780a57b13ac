/**
 * Scenario loading from dataset files.
 *
 * A scenario source is a dataset file in the shared format (header line plus
 * at least one trajectory line): the first trajectory supplies the arena,
 * the obstacle tracks, and the start pose.  Obstacles replay their recorded
 * tracks exactly, one entry per tick.
 */

import type { ObstacleSpec, SessionConfig } from "./types.js";
import { DEFAULTS } from "./types.js";

function fail(msg: string): never {
  throw new Error(`scenario file: ${msg}`);
}

function asNumber(v: unknown, what: string): number {
  if (typeof v !== "number" || !Number.isFinite(v)) fail(`${what} must be a finite number`);
  return v;
}

export function loadScenario(text: string, overrides: Partial<SessionConfig> = {}): SessionConfig {
  const lines = text.split("\n").filter((s) => s.trim().length > 0);
  if (lines.length < 2) fail("expected a header line and at least one trajectory line");
  let header: any;
  let traj: any;
  try {
    header = JSON.parse(lines[0]);
    traj = JSON.parse(lines[1]);
  } catch (e) {
    fail(`not valid JSON lines (${e})`);
  }
  if (header.schema !== 1) fail(`unsupported schema version ${header.schema}`);
  const sc = traj.scenario;
  if (!sc) fail("trajectory has no scenario");
  if (!Array.isArray(sc.goal) || sc.goal.length !== 2) fail("missing goal");
  if (!Array.isArray(sc.bounds) || sc.bounds.length !== 4) fail("missing bounds");
  const steps = traj.steps;
  if (!Array.isArray(steps) || steps.length === 0) fail("missing steps");
  const s0 = steps[0].s;
  if (!Array.isArray(s0) || s0.length !== 5) fail("malformed start state");

  const obstacles: ObstacleSpec[] = (sc.obstacles ?? []).map((o: any, i: number) => {
    if (!Array.isArray(o.track) || o.track.length === 0) fail(`obstacle ${i} has no track`);
    return {
      id: asNumber(o.id, "obstacle id"),
      radius: asNumber(o.radius, "obstacle radius"),
      track: o.track.map((p: any) => [asNumber(p[0], "track x"), asNumber(p[1], "track y")]),
    };
  });

  const sensor = header.sensor ?? {};
  return {
    bounds: {
      xmin: asNumber(sc.bounds[0], "bounds"),
      ymin: asNumber(sc.bounds[1], "bounds"),
      xmax: asNumber(sc.bounds[2], "bounds"),
      ymax: asNumber(sc.bounds[3], "bounds"),
    },
    start: { x: asNumber(s0[0], "start"), y: asNumber(s0[1], "start") },
    startPsi: asNumber(s0[3], "start psi"),
    goal: { x: asNumber(sc.goal[0], "goal"), y: asNumber(sc.goal[1], "goal") },
    obstacles,
    rObs: typeof sensor.r_obs === "number" ? sensor.r_obs : DEFAULTS.rObs,
    thetaObs: typeof sensor.theta_obs === "number" ? sensor.theta_obs : DEFAULTS.thetaObs,
    vMax: DEFAULTS.vMax,
    tickRate: DEFAULTS.tickRate,
    psiRate: DEFAULTS.psiRate,
    goalRadius: DEFAULTS.goalRadius,
    agentRadius: DEFAULTS.agentRadius,
    maxTicks: DEFAULTS.maxTicks,
    participant: "",
    ...overrides,
  };
}

/** A built-in arena for playing without a scenario file. */
export function defaultScenario(seedObstacles = true): SessionConfig {
  const obstacles: ObstacleSpec[] = [];
  if (seedObstacles) {
    const statics: [number, number, number][] = [
      [150, 120, 12],
      [260, 210, 10],
      [120, 300, 11],
      [320, 90, 9],
    ];
    statics.forEach(([x, y, r], i) => {
      obstacles.push({ id: i, radius: r, track: [[x, y]] });
    });
    // Two movers with precomputed back-and-forth tracks.
    const track1: [number, number][] = [];
    const track2: [number, number][] = [];
    for (let t = 0; t <= DEFAULTS.maxTicks; t++) {
      const s = Math.sin(t / 60);
      track1.push([200 + 80 * s, 160]);
      track2.push([90, 200 + 70 * Math.sin(t / 45)]);
    }
    obstacles.push({ id: 4, radius: 10, track: track1 });
    obstacles.push({ id: 5, radius: 8, track: track2 });
  }
  return {
    bounds: { xmin: 0, ymin: 0, xmax: 400, ymax: 400 },
    start: { x: 40, y: 40 },
    startPsi: Math.atan2(360 - 40, 360 - 40),
    goal: { x: 360, y: 360 },
    obstacles,
    rObs: DEFAULTS.rObs,
    thetaObs: DEFAULTS.thetaObs,
    vMax: DEFAULTS.vMax,
    tickRate: DEFAULTS.tickRate,
    psiRate: DEFAULTS.psiRate,
    goalRadius: DEFAULTS.goalRadius,
    agentRadius: DEFAULTS.agentRadius,
    maxTicks: DEFAULTS.maxTicks,
    participant: "",
  };
}
