// JSON schemas of the generation service.

export interface GraphNode {
  id: string;
  kind: "motion" | "action" | "specific";
  text: string;
  token_span: [number, number];
}

export interface GraphEdge {
  from: string;
  to: string;
  type: string;
}

export interface GraphPayload {
  tokens: string[];
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface ParseResponse {
  graph: GraphPayload;
  local_actions: string[];
  coefficients: Record<string, number>;
  lambdas: number[];
}

export interface SkeletonPayload {
  joint_names: string[];
  parent_index: number[];
  bone_lengths: number[];
  heel_toe_indices: number[][];
}

export interface MotionPayload {
  skeleton: SkeletonPayload;
  fps: number;
  n_frames: number;
  positions: number[][][];
  features?: number[][];
  diagnostics?: DiagnosticsPayload;
}

export interface Candidate {
  id: string;
  seed: number;
  preview: MotionPayload;
}

export interface SampleActionsResponse {
  text: string;
  candidates: Candidate[];
}

export interface DiagnosticsPayload {
  lambdas: number[];
  reference_descriptions: string[];
  final_energies: number[];
  energy_trace: number[][];
  [key: string]: unknown;
}

export interface JobResult {
  motion_id: string;
  diagnostics: DiagnosticsPayload;
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobRecord {
  id: string;
  kind: string;
  status: JobStatus;
  result: JobResult | null;
  error: string | null;
}

export interface GenerateRequest {
  text: string;
  selected_action_ids?: string[];
  weight_multipliers?: number[];
  rho?: number;
  steps?: [number, number, number];
  seed?: number;
  length?: number | null;
  sync?: boolean;
}

export interface GenerateResponse {
  job_id: string;
  status: JobStatus;
  result?: JobResult | null;
  error?: string | null;
}
