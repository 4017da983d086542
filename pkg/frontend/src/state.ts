// Session state and its pure update functions.

import type { ApiClient } from "./api.js";
import type {
  Candidate,
  JobResult,
  MotionPayload,
  ParseResponse,
} from "./types.js";

export const MULTIPLIER_MIN = 0;
export const MULTIPLIER_MAX = 4;

export interface ActionSlot {
  description: string;
  candidates: Candidate[];
  selectedId: string | null;
  multiplier: number;
}

export interface GenerationSettings {
  rho: number;
  seed: number;
  steps: [number, number, number];
  multipliers: number[];
  selectedIds: (string | null)[];
}

export interface HistoryEntry {
  id: number;
  description: string;
  settings: GenerationSettings;
  motionId: string;
  lambdas: number[];
}

export interface SessionState {
  description: string;
  parse: ParseResponse | null;
  actions: ActionSlot[];
  rho: number;
  seed: number;
  steps: [number, number, number];
  history: HistoryEntry[];
  compare: [number | null, number | null];
}

export function initialState(): SessionState {
  return {
    description: "",
    parse: null,
    actions: [],
    rho: 0.01,
    seed: 0,
    steps: [50, 50, 50],
    history: [],
    compare: [null, null],
  };
}

export function withDescription(state: SessionState, text: string): SessionState {
  return { ...state, description: text, parse: null, actions: [] };
}

export function withParse(state: SessionState, parse: ParseResponse): SessionState {
  const actions: ActionSlot[] = parse.local_actions.map((description) => ({
    description,
    candidates: [],
    selectedId: null,
    multiplier: 1,
  }));
  return { ...state, parse, actions };
}

export function withCandidates(
  state: SessionState,
  actionIndex: number,
  candidates: Candidate[],
): SessionState {
  const actions = state.actions.map((slot, i) =>
    i === actionIndex
      ? { ...slot, candidates, selectedId: candidates[0]?.id ?? null }
      : slot,
  );
  return { ...state, actions };
}

export function withSelection(
  state: SessionState,
  actionIndex: number,
  candidateId: string,
): SessionState {
  const slot = state.actions[actionIndex];
  if (!slot) throw new Error(`no action at index ${actionIndex}`);
  if (!slot.candidates.some((c) => c.id === candidateId)) {
    throw new Error(`candidate ${candidateId} is not live for this action`);
  }
  const actions = state.actions.map((s, i) =>
    i === actionIndex ? { ...s, selectedId: candidateId } : s,
  );
  return { ...state, actions };
}

export function withMultiplier(
  state: SessionState,
  actionIndex: number,
  value: number,
): SessionState {
  if (!state.actions[actionIndex]) {
    throw new Error(`no action at index ${actionIndex}`);
  }
  const clamped = Math.min(MULTIPLIER_MAX, Math.max(MULTIPLIER_MIN, value));
  const actions = state.actions.map((s, i) =>
    i === actionIndex ? { ...s, multiplier: clamped } : s,
  );
  return { ...state, actions };
}

export function withRho(state: SessionState, rho: number): SessionState {
  return { ...state, rho: Math.max(0, rho) };
}

export function withSeed(state: SessionState, seed: number): SessionState {
  return { ...state, seed: Math.trunc(seed) };
}

export function currentSettings(state: SessionState): GenerationSettings {
  return {
    rho: state.rho,
    seed: state.seed,
    steps: [...state.steps] as [number, number, number],
    multipliers: state.actions.map((a) => a.multiplier),
    selectedIds: state.actions.map((a) => a.selectedId),
  };
}

export function withHistoryEntry(
  state: SessionState,
  motionId: string,
  lambdas: number[],
): SessionState {
  const entry: HistoryEntry = {
    id: state.history.length + 1,
    description: state.description,
    settings: currentSettings(state),
    motionId,
    lambdas: [...lambdas],
  };
  return { ...state, history: [...state.history, entry] };
}

export function withCompare(
  state: SessionState,
  left: number | null,
  right: number | null,
): SessionState {
  for (const id of [left, right]) {
    if (id !== null && !state.history.some((h) => h.id === id)) {
      throw new Error(`history entry ${id} does not exist`);
    }
  }
  return { ...state, compare: [left, right] };
}

export interface GenerationOutcome {
  state: SessionState;
  motion: MotionPayload;
  result: JobResult;
}

/** The full compose flow: generate from the current session settings,
 * poll the job, fetch the motion, and append a history entry. */
export async function composeAndGenerate(
  client: ApiClient,
  state: SessionState,
  options: { sync?: boolean; pollInitialMs?: number } = {},
): Promise<GenerationOutcome> {
  if (!state.parse || state.actions.length === 0) {
    throw new Error("parse the description before generating");
  }
  const settings = currentSettings(state);
  const selected = settings.selectedIds.filter((id): id is string => !!id);
  const request = {
    text: state.description,
    rho: settings.rho,
    seed: settings.seed,
    steps: settings.steps,
    weight_multipliers: settings.multipliers,
    ...(selected.length === state.actions.length
      ? { selected_action_ids: selected }
      : {}),
    ...(options.sync ? { sync: true } : {}),
  };
  const submitted = await client.generate(request);
  let result: JobResult;
  if (options.sync && submitted.result) {
    result = submitted.result;
  } else {
    const job = await client.waitForJob(submitted.job_id, {
      initialMs: options.pollInitialMs,
    });
    if (job.status === "failed" || !job.result) {
      throw new Error(job.error ?? "generation failed");
    }
    result = job.result;
  }
  const motion = await client.getMotion(result.motion_id);
  const next = withHistoryEntry(state, result.motion_id,
    result.diagnostics.lambdas);
  return { state: next, motion, result };
}
