import type { AgreementCurve, AnnotationRecord } from "./types.js";

export interface DisagreementEntry {
  frameId: string;
  annotators: [string, string];
  maxJointDistanceMm: number;
}

/**
 * Frames whose first two annotators disagree beyond a threshold, mirroring
 * the server's scoring: max distance over the first annotator's visible
 * joints (a joint missing from the prediction counts as disagreement).
 */
export function disagreementsAt(
  byFrame: Map<string, AnnotationRecord[]>,
  thresholdMm: number,
): DisagreementEntry[] {
  const out: DisagreementEntry[] = [];
  for (const [frameId, records] of byFrame) {
    if (records.length < 2) continue;
    const sorted = [...records].sort((a, b) => a.annotator.localeCompare(b.annotator));
    const [first, second] = sorted;
    let worst = 0;
    for (const [joint, entry] of Object.entries(first.joints)) {
      if (!entry.v) continue;
      const other = second.joints[joint];
      if (!other || !other.v) {
        worst = Infinity;
        break;
      }
      const dx = entry.p[0] - other.p[0];
      const dy = entry.p[1] - other.p[1];
      const dz = entry.p[2] - other.p[2];
      worst = Math.max(worst, Math.hypot(dx, dy, dz));
    }
    if (worst > thresholdMm) {
      out.push({
        frameId,
        annotators: [first.annotator, second.annotator],
        maxJointDistanceMm: worst,
      });
    }
  }
  return out.sort((a, b) => b.maxJointDistanceMm - a.maxJointDistanceMm);
}

export function curveToPolyline(
  curve: AgreementCurve, width: number, height: number,
): string {
  const n = curve.thresholds_mm.length;
  const maxT = curve.thresholds_mm[n - 1] || 1;
  return curve.thresholds_mm
    .map((t, i) => {
      const x = (t / maxT) * width;
      const y = height - curve.proportions[i] * height;
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}
