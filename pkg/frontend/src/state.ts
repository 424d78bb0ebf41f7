/**
 * Pure view-model derivations.  Every structure here is a function of the
 * last API responses only; no state is invented on the client.
 */

import type { Job, MethodInfo, SelectionResult } from "./api.js";

export interface JobRow {
  id: string;
  method: string;
  state: Job["state"];
  created_at: number;
  updated_at: number;
  resultLink: string | null;
}

export interface Stage {
  label: string;
  status: "done" | "active" | "pending";
}

export interface ResultView {
  jobId: string;
  method: string;
  methodName: string;
  description: string;
  stages: Stage[];
  progressPercent: number;
  state: Job["state"];
  error: string | null;
  /** rows exactly as the API returned them; no client re-sorting */
  rows: { rank: number; model: string; value: number | null; isTop: boolean }[];
  direction: string | null;
}

export const STAGE_LABELS = ["Dataset Encoding", "Model Selection"] as const;
export const DEFAULT_POLL_INTERVAL_MS = 2000;

export function jobRows(jobs: Job[]): JobRow[] {
  return jobs.map((job) => ({
    id: job.id,
    method: job.method,
    state: job.state,
    created_at: job.created_at,
    updated_at: job.updated_at,
    resultLink: job.state === "FINISHED" ? `#/jobs/${job.id}` : null,
  }));
}

export function stagesFor(job: Job): Stage[] {
  const position =
    job.state === "PENDING" ? -1 :
    job.state === "ENCODING" ? 0 :
    job.state === "SELECTING" ? 1 :
    job.state === "FINISHED" ? 2 :
    // FAILED: freeze at the stage the server last reported
    job.stage === STAGE_LABELS[1] ? 1 : job.stage === STAGE_LABELS[0] ? 0 : -1;
  return STAGE_LABELS.map((label, i) => ({
    label,
    status: position > i || job.state === "FINISHED" ? "done" : position === i ? "active" : "pending",
  }));
}

export function resultView(
  job: Job,
  result: SelectionResult | null,
  methods: MethodInfo[],
): ResultView {
  const info = methods.find((m) => m.method === job.method);
  const rows = (result?.ranked ?? []).map(([model, value, rank]) => ({
    rank,
    model,
    value,
    isTop: rank === 1,
  }));
  return {
    jobId: job.id,
    method: job.method,
    methodName: info?.name ?? job.method,
    description: info?.description ?? "",
    stages: stagesFor(job),
    progressPercent: job.progress,
    state: job.state,
    error: job.error,
    rows,
    direction: result?.direction ?? null,
  };
}

/** Parameter fields shown for a method come from the API catalog alone. */
export function paramFields(methods: MethodInfo[], method: string): string[] {
  return methods.find((m) => m.method === method)?.params ?? [];
}

export interface PollState {
  job: Job | null;
  failures: number;
  stale: boolean;
  nextDelayMs: number;
}

export const INITIAL_POLL: PollState = {
  job: null,
  failures: 0,
  stale: false,
  nextDelayMs: DEFAULT_POLL_INTERVAL_MS,
};

/** Successful poll: fresh snapshot, reset backoff. */
export function pollSucceeded(state: PollState, job: Job): PollState {
  return { job, failures: 0, stale: false, nextDelayMs: DEFAULT_POLL_INTERVAL_MS };
}

/** Failed poll: keep the last snapshot, flag it stale, back off (capped). */
export function pollFailed(state: PollState): PollState {
  const failures = state.failures + 1;
  return {
    job: state.job,
    failures,
    stale: state.job !== null,
    nextDelayMs: Math.min(DEFAULT_POLL_INTERVAL_MS * 2 ** failures, 30000),
  };
}

/** Polling stops once the job is terminal. */
export function pollDone(state: PollState): boolean {
  return state.job !== null && (state.job.state === "FINISHED" || state.job.state === "FAILED");
}
