/** Angle and view-cone math; mirrors the simulator's conventions exactly. */

/** Wrap an angle to (-pi, pi]. */
export function wrapAngle(x: number): number {
  const w = Math.atan2(Math.sin(x), Math.cos(x));
  return w <= -Math.PI ? Math.PI : w;
}

/**
 * Center-point cone membership test: within range and within the half-angle
 * of the sensor axis.  A target exactly at the sensor counts as inside.
 */
export function inCone(
  sx: number,
  sy: number,
  psi: number,
  tx: number,
  ty: number,
  rObs: number,
  thetaObs: number,
): boolean {
  const dx = tx - sx;
  const dy = ty - sy;
  if (dx === 0 && dy === 0) return true;
  if (Math.hypot(dx, dy) > rObs) return false;
  return Math.abs(wrapAngle(Math.atan2(dy, dx) - psi)) <= thetaObs;
}

/** Rescale a displacement so its norm never exceeds vMax * h. */
export function clampDisplacement(
  dx: number,
  dy: number,
  vMax: number,
  h: number,
): [number, number] {
  const norm = Math.hypot(dx, dy);
  const limit = vMax * h;
  if (norm > limit) {
    const scale = limit / norm;
    return [dx * scale, dy * scale];
  }
  return [dx, dy];
}

/** Advance psi toward a target bearing, limited to +/- rate per tick. */
export function turnToward(psi: number, target: number, rate: number): number {
  const err = wrapAngle(target - psi);
  const step = Math.max(-rate, Math.min(rate, err));
  return wrapAngle(psi + step);
}
