// Browser shell: wires the form, the polling loop, and the chat box to
// the pure state/render modules. All data shown comes from the server.

import {
  ApiError,
  getChatSession,
  getHealth,
  getJob,
  getTranscript,
  sendChat,
  submitClassification,
  type Job,
  type Transcript,
} from "./api.js";
import {
  beginRetry,
  beginSend,
  chatFromSession,
  pollDelay,
  pollResult,
  sendFailed,
  sendSucceeded,
  startSubmit,
  submitAccepted,
  submitRejected,
  type ChatState,
  type UploadPhase,
} from "./state.js";
import {
  renderBanner,
  renderChat,
  renderExamples,
  renderStatus,
  renderToolBadges,
  renderTranscript,
  renderValidationErrors,
} from "./render.js";
import { geoRequired, validateUpload } from "./validate.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

let phase: UploadPhase = { kind: "idle" };
let chat: ChatState | null = null;
let lastForm: { file: Blob; kind: string; geo: { lat: number; lon: number; zoom?: number } | null } | null = null;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function setPhase(next: UploadPhase): void {
  phase = next;
  $("status").innerHTML = renderStatus(phase);
}

async function pollUntilDone(jobId: string): Promise<void> {
  while (phase.kind === "polling" && phase.jobId === jobId) {
    await sleep(pollDelay(phase.attempt));
    let job: Job;
    try {
      job = await getJob(jobId);
    } catch (err) {
      const message = err instanceof ApiError ? err.body : String(err);
      setPhase({ kind: "failed", message, retryable: true });
      return;
    }
    setPhase(pollResult(phase, job));
  }
  if (phase.kind === "done") {
    window.location.hash = `job=${phase.job.job_id}`;
    await showResult(phase.job);
  }
}

async function showResult(job: Job): Promise<void> {
  const result = job.result;
  if (!result) return;
  $("banner").innerHTML = renderBanner(result.prediction);
  $("examples").innerHTML = renderExamples(job);
  let transcript: Transcript;
  try {
    transcript = await getTranscript(result.transcript_id);
  } catch (err) {
    $("transcript").innerHTML = renderValidationErrors([String(err)]);
    return;
  }
  $("tool-badges").innerHTML = renderToolBadges(transcript);
  $("transcript").innerHTML = renderTranscript(transcript);
  const session = await getChatSession(result.transcript_id);
  chat = chatFromSession(result.transcript_id, session.messages);
  $("chat").innerHTML = renderChat(chat.bubbles, chat.inFlight);
}

async function submitForm(): Promise<void> {
  const fileInput = $<HTMLInputElement>("image-file");
  const form = {
    file: fileInput.files && fileInput.files[0] ? fileInput.files[0] : null,
    datasetKind: $<HTMLSelectElement>("dataset-kind").value,
    lat: $<HTMLInputElement>("geo-lat").value,
    lon: $<HTMLInputElement>("geo-lon").value,
    zoom: $<HTMLInputElement>("geo-zoom").value,
  };
  const validation = validateUpload(form);
  $("form-errors").innerHTML = renderValidationErrors(validation.errors);
  if (!validation.ok || !form.file) return;

  lastForm = { file: form.file, kind: form.datasetKind, geo: validation.geo };
  await submitValidated();
}

async function submitValidated(): Promise<void> {
  if (!lastForm) return;
  setPhase(startSubmit());
  $("banner").innerHTML = "";
  $("examples").innerHTML = "";
  $("tool-badges").innerHTML = "";
  $("transcript").innerHTML = "";
  $("chat").innerHTML = "";
  try {
    const jobId = await submitClassification(lastForm.file, lastForm.kind, lastForm.geo);
    setPhase(submitAccepted(jobId));
    await pollUntilDone(jobId);
  } catch (err) {
    if (err instanceof ApiError) {
      setPhase(submitRejected(err.status, err.body));
    } else {
      setPhase({ kind: "failed", message: String(err), retryable: true });
    }
  }
}

async function handleChatSubmit(text: string): Promise<void> {
  if (!chat) return;
  const attempt = beginSend(chat, text);
  if (!attempt.send) return;
  chat = attempt.state;
  $("chat").innerHTML = renderChat(chat.bubbles, chat.inFlight);
  await deliver(text.trim());
}

async function deliver(text: string): Promise<void> {
  if (!chat) return;
  try {
    const reply = await sendChat(chat.transcriptId, text);
    chat = sendSucceeded(chat, reply);
  } catch {
    chat = sendFailed(chat);
  }
  $("chat").innerHTML = renderChat(chat.bubbles, chat.inFlight);
}

function syncGeoVisibility(): void {
  const kind = $<HTMLSelectElement>("dataset-kind").value;
  $("geo-fields").style.display = geoRequired(kind) ? "" : "none";
}

async function resumeFromHash(): Promise<void> {
  const match = window.location.hash.match(/job=([A-Za-z0-9-]+)/);
  if (!match) return;
  try {
    const job = await getJob(match[1]);
    if (job.status === "done") {
      setPhase({ kind: "done", job });
      await showResult(job);
    } else if (job.status === "queued" || job.status === "running") {
      setPhase(submitAccepted(job.job_id));
      await pollUntilDone(job.job_id);
    }
  } catch {
    window.location.hash = "";
  }
}

async function showHealth(): Promise<void> {
  try {
    const health = await getHealth();
    const degraded = Object.entries(health).filter(([, v]) => v !== "ok");
    $("health").textContent =
      degraded.length === 0
        ? "all backends ok"
        : "degraded: " + degraded.map(([k, v]) => `${k} ${v}`).join(", ");
  } catch {
    $("health").textContent = "service unreachable";
  }
}

document.addEventListener("DOMContentLoaded", () => {
  $<HTMLSelectElement>("dataset-kind").addEventListener("change", syncGeoVisibility);
  syncGeoVisibility();
  void showHealth();
  void resumeFromHash();

  $<HTMLFormElement>("upload-form").addEventListener("submit", (event) => {
    event.preventDefault();
    void submitForm();
  });

  // chat form and retry buttons re-render, so handle them by delegation
  document.body.addEventListener("submit", (event) => {
    const target = event.target as HTMLElement;
    if (target.id === "chat-form") {
      event.preventDefault();
      const input = $<HTMLInputElement>("chat-input");
      void handleChatSubmit(input.value);
    }
  });
  document.body.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (target.id === "retry-submit") {
      void submitValidated();
    } else if (target.id === "retry-chat" && chat) {
      const retry = beginRetry(chat);
      if (retry.send) {
        chat = retry.state;
        $("chat").innerHTML = renderChat(chat.bubbles, chat.inFlight);
        void deliver(retry.text);
      }
    }
  });
});
