/** Wire types for the annotation service (API prefix /v1). */

export type Vec2 = [number, number];
export type Vec3 = [number, number, number];

export interface Meta {
  dataset: string;
  n_frames: number;
  joint_names: string[];
  edges: [string, string][];
  thresholds_mm: number[];
}

export interface FrameSummary {
  id: string;
  annotators: string[];
}

export interface Intrinsics {
  f_u: number;
  f_v: number;
  c_u: number;
  c_v: number;
}

export interface FrameMeta {
  id: string;
  index: number;
  width: number;
  height: number;
  has_rgb: boolean;
  depth_range: [number, number];
  intrinsics: Intrinsics;
  annotations: AnnotationRecord[];
}

export interface FitPayload {
  theta: number[];
  joints2d: Record<string, Vec2>;
  joints3d: Record<string, Vec3>;
  residuals_px: Record<string, number>;
  mean_residual_px: number;
}

export interface FitResponse {
  fit: FitPayload | null;
  warning: string | null;
}

export interface AnnotationRecord {
  frame_id: string;
  annotator: string;
  labels: Record<string, Vec2>;
  joints: Record<string, { p: Vec3; v: boolean }>;
  mean_residual_px: number;
}

export interface AcceptResponse {
  accepted: boolean;
  annotation: AnnotationRecord;
}

export interface AgreementCurve {
  mode: string;
  thresholds_mm: number[];
  proportions: number[];
  n_frames: number;
}
