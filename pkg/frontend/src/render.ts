/** Canvas renderer for the draw list; world y points up, screen y down. */

import type { Session } from "./game.js";
import { drawList } from "./game.js";
import type { DrawItem } from "./types.js";

export function render(ctx: CanvasRenderingContext2D, session: Session): void {
  const cfg = session.config;
  const w = cfg.bounds.xmax - cfg.bounds.xmin;
  const h = cfg.bounds.ymax - cfg.bounds.ymin;
  const sx = ctx.canvas.width / w;
  const sy = ctx.canvas.height / h;

  const X = (x: number) => (x - cfg.bounds.xmin) * sx;
  const Y = (y: number) => ctx.canvas.height - (y - cfg.bounds.ymin) * sy;

  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);

  for (const item of drawList(session)) {
    drawItem(ctx, session, item, X, Y, sx);
  }

  ctx.fillStyle = "#9aa7b5";
  ctx.font = "13px system-ui, sans-serif";
  const label =
    session.status === "running"
      ? `tick ${session.tick}`
      : `${session.status} at tick ${session.tick} — R to restart, E to export`;
  ctx.fillText(label, 10, 18);
}

function drawItem(
  ctx: CanvasRenderingContext2D,
  session: Session,
  item: DrawItem,
  X: (x: number) => number,
  Y: (y: number) => number,
  scale: number,
): void {
  switch (item.kind) {
    case "bounds": {
      ctx.strokeStyle = "#39424e";
      ctx.lineWidth = 2;
      ctx.strokeRect(0, 0, ctx.canvas.width, ctx.canvas.height);
      return;
    }
    case "cone": {
      const r = (item.radius ?? 0) * scale;
      const theta = session.config.thetaObs;
      ctx.fillStyle = "rgba(255, 170, 60, 0.14)";
      ctx.beginPath();
      ctx.moveTo(X(item.x), Y(item.y));
      // Screen y is flipped, so angles negate.
      ctx.arc(X(item.x), Y(item.y), r, -(item.psi ?? 0) - theta, -(item.psi ?? 0) + theta);
      ctx.closePath();
      ctx.fill();
      return;
    }
    case "goal": {
      ctx.fillStyle = "#37c871";
      ctx.beginPath();
      ctx.arc(X(item.x), Y(item.y), (item.radius ?? 5) * scale, 0, 2 * Math.PI);
      ctx.fill();
      return;
    }
    case "obstacle": {
      ctx.fillStyle = "#e05555";
      ctx.beginPath();
      ctx.arc(X(item.x), Y(item.y), (item.radius ?? 5) * scale, 0, 2 * Math.PI);
      ctx.fill();
      return;
    }
    case "agent": {
      ctx.fillStyle = "#ffae3c";
      ctx.beginPath();
      ctx.arc(X(item.x), Y(item.y), (item.radius ?? 5) * scale, 0, 2 * Math.PI);
      ctx.fill();
      const psi = item.psi ?? 0;
      ctx.strokeStyle = "#ffd9a0";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(X(item.x), Y(item.y));
      ctx.lineTo(
        X(item.x + Math.cos(psi) * 12),
        Y(item.y + Math.sin(psi) * 12),
      );
      ctx.stroke();
      return;
    }
  }
}
