// Pure state machines for the two asynchronous flows: job polling after
// an upload, and the follow-up chat with its single-request-in-flight
// guard. The browser shell applies these transitions; tests drive them
// directly.

import type { Job } from "./api.js";

export type UploadPhase =
  | { kind: "idle" }
  | { kind: "submitting" }
  | { kind: "polling"; jobId: string; attempt: number }
  | { kind: "done"; job: Job }
  | { kind: "failed"; message: string; retryable: boolean };

export const POLL_BASE_MS = 300;
export const POLL_FACTOR = 1.5;
export const POLL_CAP_MS = 3000;

/** Delay before poll number ``attempt`` (0-based): bounded exponential backoff. */
export function pollDelay(attempt: number): number {
  return Math.min(POLL_BASE_MS * POLL_FACTOR ** attempt, POLL_CAP_MS);
}

export function startSubmit(): UploadPhase {
  return { kind: "submitting" };
}

export function submitAccepted(jobId: string): UploadPhase {
  return { kind: "polling", jobId, attempt: 0 };
}

export function submitRejected(status: number, body: string): UploadPhase {
  // 503 = backend momentarily down -> worth retrying; 4xx = fix the form
  return { kind: "failed", message: body, retryable: status === 503 || status >= 500 };
}

export function pollResult(phase: UploadPhase, job: Job): UploadPhase {
  if (phase.kind !== "polling") return phase;
  if (job.status === "done") return { kind: "done", job };
  if (job.status === "failed") {
    return { kind: "failed", message: job.error ?? "job failed", retryable: true };
  }
  return { kind: "polling", jobId: phase.jobId, attempt: phase.attempt + 1 };
}

// --- follow-up chat ---

export interface ChatBubble {
  role: string;
  text: string;
  pending?: boolean;
  failed?: boolean;
}

export interface ChatState {
  transcriptId: string;
  bubbles: ChatBubble[];
  inFlight: boolean;
}

export function chatFromSession(
  transcriptId: string,
  messages: { role: string; text: string }[],
): ChatState {
  return { transcriptId, bubbles: messages.map((m) => ({ role: m.role, text: m.text })), inFlight: false };
}

/**
 * Attempt to send: appends an optimistic user bubble and flips the
 * in-flight guard. Returns ``send: false`` (state unchanged) when a
 * request is already running or the text is blank, so double-clicks
 * cannot produce duplicate requests.
 */
export function beginSend(state: ChatState, text: string): { state: ChatState; send: boolean } {
  const trimmed = text.trim();
  if (state.inFlight || trimmed === "") return { state, send: false };
  return {
    state: {
      ...state,
      inFlight: true,
      bubbles: [...state.bubbles, { role: "user", text: trimmed, pending: true }],
    },
    send: true,
  };
}

export function sendSucceeded(state: ChatState, reply: string): ChatState {
  const bubbles = state.bubbles.map((b) => (b.pending ? { role: b.role, text: b.text } : b));
  return {
    ...state,
    inFlight: false,
    bubbles: [...bubbles, { role: "assistant", text: reply }],
  };
}

/** The failed user bubble stays (marked retryable) but is never duplicated. */
export function sendFailed(state: ChatState): ChatState {
  const bubbles = state.bubbles.map((b) =>
    b.pending ? { role: b.role, text: b.text, failed: true } : b,
  );
  return { ...state, inFlight: false, bubbles };
}

/** Re-send a previously failed bubble: flips it back to pending. */
export function beginRetry(state: ChatState): { state: ChatState; send: boolean; text: string } {
  if (state.inFlight) return { state, send: false, text: "" };
  const failed = state.bubbles.find((b) => b.failed);
  if (!failed) return { state, send: false, text: "" };
  const bubbles = state.bubbles.map((b) =>
    b === failed ? { role: b.role, text: b.text, pending: true } : b,
  );
  return { state: { ...state, inFlight: true, bubbles }, send: true, text: failed.text };
}
