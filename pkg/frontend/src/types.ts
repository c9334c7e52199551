// API payload shapes, mirrored from the mission service schema. The console
// never recomputes any score: every number it shows comes from these objects.

export type Verdict = "target" | "possible_target" | "not_target" | "rejected";

export interface DetectionPayload {
  class_id: number;
  cx: number;
  cy: number;
  w: number;
  h: number;
  score: number;
}

export interface CandidateView {
  candidate_id: number;
  frame_id: number;
  verdict: Verdict;
  reject_reason: string | null;
  p_m1: number | null;
  p_m2: number | null;
  match_count1: number | null;
  match_count2: number | null;
  candidate_keypoints: number | null;
  d1: number | null;
  d2: number | null;
  d_hist: number | null;
  strength: string | null;
  retained_ratio: number | null;
  histogram: number[] | null;
  detection: DetectionPayload;
  crop_url: string | null;
}

export interface FixPayload {
  x: number;
  y: number;
  timestamp: number;
  frame_id: number;
}

export interface AggregatePayload {
  mean: [number, number];
  covariance: number[][];
  semi_axes: [number, number];
  orientation: number;
  count: number;
  degenerate: boolean;
}

export interface TemplatePayload {
  template_id: number;
  histogram: number[];
  keypoints: number;
}

export interface ThresholdsPayload {
  d_certain: number;
  d_likely: number;
  d_uncertain: number;
  p_strong: number;
  p_accept: number;
}

export interface StatePayload {
  state: "idle" | "search" | "awaiting_confirmation" | "confirmed";
  pending: CandidateView | null;
  aggregate: AggregatePayload;
  fixes: FixPayload[];
  skips: Record<string, number>;
  seq: number;
  templates: TemplatePayload[];
  thresholds: ThresholdsPayload | null;
}

export interface EventPayload {
  seq: number;
  type: "state" | "report";
  candidate_id?: number;
  report?: CandidateView;
  from?: string;
  to?: string;
  snapshot?: StatePayload;
}

export interface MissionView {
  stateName: StatePayload["state"] | "disconnected";
  pending: CandidateView | null;
  aggregate: AggregatePayload | null;
  fixes: FixPayload[];
  templates: TemplatePayload[];
  thresholds: ThresholdsPayload | null;
  candidates: CandidateView[]; // newest last, deduplicated, capped
  lastSeq: number;
  connected: boolean;
  stale: boolean;
  eventLog: string[];
}
