// HTML renderers: every view is a pure function of server data plus the
// pending-input state, so the page can never show content the backend did
// not produce.

import type { Job, Prediction, Transcript } from "./api.js";
import type { ChatBubble, UploadPhase } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderBanner(prediction: Prediction): string {
  const positive = prediction.label === 1;
  const word = positive ? "POSITIVE" : "NEGATIVE";
  const tone = positive ? "banner-positive" : "banner-negative";
  const note = prediction.inconclusive
    ? ' <span class="banner-note">(inconclusive: the agent never gave a parseable answer)</span>'
    : "";
  return (
    `<div class="banner ${tone}" role="status">` +
    `<strong>${word}</strong> &mdash; confidence ${prediction.confidence.toFixed(2)}${note}` +
    `</div>`
  );
}

export function renderStatus(phase: UploadPhase): string {
  switch (phase.kind) {
    case "idle":
      return "";
    case "submitting":
      return '<p class="status">Uploading&hellip;</p>';
    case "polling":
      return `<p class="status">Classifying (job ${escapeHtml(phase.jobId)}, poll #${phase.attempt + 1})&hellip;</p>`;
    case "done":
      return "";
    case "failed": {
      const retry = phase.retryable
        ? ' <button type="button" id="retry-submit" class="retry">Retry</button>'
        : "";
      return `<div class="error-panel" role="alert">${escapeHtml(phase.message)}${retry}</div>`;
    }
  }
}

export function renderExamples(job: Job): string {
  const result = job.result;
  if (!result || !result.example_urls) return "";
  return (
    '<div class="examples">' +
    `<figure><img src="${escapeHtml(result.example_urls.positive)}" alt="most similar known positive">` +
    `<figcaption>Most similar known positive (${escapeHtml(result.visrag_pos_id ?? "")})</figcaption></figure>` +
    `<figure><img src="${escapeHtml(result.example_urls.negative)}" alt="most similar known negative">` +
    `<figcaption>Most similar known negative (${escapeHtml(result.visrag_neg_id ?? "")})</figcaption></figure>` +
    "</div>"
  );
}

export function renderToolBadges(transcript: Transcript): string {
  if (transcript.tool_calls.length === 0) return "";
  const badges = transcript.tool_calls
    .map(
      (call) =>
        `<a class="tool-badge" href="#turn-${call.turn}" title="${escapeHtml(call.result_summary)}">` +
        `${escapeHtml(call.tool_name)} @ turn ${call.turn}</a>`,
    )
    .join(" ");
  return `<div class="tool-badges">${badges}</div>`;
}

export function renderTranscript(transcript: Transcript): string {
  let assistantTurn = 0;
  const bubbles = transcript.messages.map((message) => {
    let turnAnchor = "";
    if (message.role === "assistant") {
      assistantTurn += 1;
      turnAnchor = ` id="turn-${assistantTurn}"`;
    }
    const images = message.images
      .map(
        (img) =>
          `<figure class="attachment"><img src="data:image/png;base64,${img.png_b64}" ` +
          `alt="${escapeHtml(img.caption)}"><figcaption>${escapeHtml(img.caption)}</figcaption></figure>`,
      )
      .join("");
    return (
      `<div class="bubble bubble-${message.role}"${turnAnchor}>` +
      `<span class="role">${message.role}</span>` +
      `<pre>${escapeHtml(message.text)}</pre>${images}</div>`
    );
  });
  return `<div class="transcript">${bubbles.join("")}</div>`;
}

export function renderChat(bubbles: ChatBubble[], inFlight: boolean): string {
  const rendered = bubbles
    .map((bubble) => {
      const classes = ["bubble", `bubble-${bubble.role}`];
      if (bubble.pending) classes.push("pending");
      if (bubble.failed) classes.push("failed");
      const marker = bubble.failed
        ? ' <button type="button" class="retry" id="retry-chat">Retry</button>'
        : "";
      return `<div class="${classes.join(" ")}"><pre>${escapeHtml(bubble.text)}</pre>${marker}</div>`;
    })
    .join("");
  const disabled = inFlight ? " disabled" : "";
  return (
    `<div class="chat-log">${rendered}</div>` +
    `<form id="chat-form" class="chat-form">` +
    `<input id="chat-input" type="text" placeholder="Ask about this decision" aria-label="Follow-up question"${disabled}>` +
    `<button id="chat-send" type="submit"${disabled}>Send</button></form>`
  );
}

export function renderValidationErrors(errors: string[]): string {
  if (errors.length === 0) return "";
  const items = errors.map((e) => `<li>${escapeHtml(e)}</li>`).join("");
  return `<ul class="error-panel" role="alert">${items}</ul>`;
}
