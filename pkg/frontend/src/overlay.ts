import type { FitPayload, Vec2 } from "./types.js";

export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

/** Fit an image of (w, h) pixels into a canvas, preserving aspect. */
export function viewTransform(
  imageW: number, imageH: number, canvasW: number, canvasH: number,
): ViewTransform {
  const scale = Math.min(canvasW / imageW, canvasH / imageH);
  return {
    scale,
    offsetX: (canvasW - imageW * scale) / 2,
    offsetY: (canvasH - imageH * scale) / 2,
  };
}

export function toCanvas(p: Vec2, t: ViewTransform): Vec2 {
  return [p[0] * t.scale + t.offsetX, p[1] * t.scale + t.offsetY];
}

export function toImage(p: Vec2, t: ViewTransform): Vec2 {
  return [(p[0] - t.offsetX) / t.scale, (p[1] - t.offsetY) / t.scale];
}

const FINGER_COLORS: Record<string, string> = {
  index: "#4da6ff",
  middle: "#7fe08a",
  ring: "#ffd24d",
  pinky: "#ff8c66",
  thumb: "#e08ae0",
  wrist: "#ffffff",
};

export function jointColor(joint: string): string {
  const digit = joint.split("_")[0];
  return FINGER_COLORS[digit] ?? "#cccccc";
}

export function drawOverlay(
  ctx: CanvasRenderingContext2D,
  fit: FitPayload | null,
  labels: Record<string, Vec2>,
  edges: [string, string][],
  t: ViewTransform,
  selectedJoint: string | null,
): void {
  if (fit) {
    ctx.lineWidth = 1.5;
    for (const [a, b] of edges) {
      const pa = fit.joints2d[a];
      const pb = fit.joints2d[b];
      if (!pa || !pb) continue;
      const [ax, ay] = toCanvas(pa, t);
      const [bx, by] = toCanvas(pb, t);
      ctx.strokeStyle = jointColor(b);
      ctx.beginPath();
      ctx.moveTo(ax, ay);
      ctx.lineTo(bx, by);
      ctx.stroke();
    }
    for (const [joint, p] of Object.entries(fit.joints2d)) {
      const [x, y] = toCanvas(p, t);
      ctx.fillStyle = jointColor(joint);
      ctx.beginPath();
      ctx.arc(x, y, 2.5, 0, Math.PI * 2);
      ctx.fill();
    }
  }
  for (const [joint, p] of Object.entries(labels)) {
    const [x, y] = toCanvas(p, t);
    ctx.strokeStyle = joint === selectedJoint ? "#ff3333" : jointColor(joint);
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(x - 5, y);
    ctx.lineTo(x + 5, y);
    ctx.moveTo(x, y - 5);
    ctx.lineTo(x, y + 5);
    ctx.stroke();
  }
}
