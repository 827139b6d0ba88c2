// Typed client for the classification service REST API. Every function
// takes an injectable fetch so tests can run against a stub backend.

export interface Prediction {
  label: number;
  confidence: number;
  score: number;
  inconclusive: boolean;
}

export interface JobResult {
  prediction: Prediction;
  transcript_id: string;
  visrag_pos_id: string | null;
  visrag_neg_id: string | null;
  example_urls?: { positive: string; negative: string };
}

export interface Job {
  job_id: string;
  status: "queued" | "running" | "done" | "failed";
  dataset_kind: string;
  submitted_at: string;
  finished_at: string | null;
  result: JobResult | null;
  error: string | null;
}

export interface TranscriptImage {
  caption: string;
  png_b64: string;
}

export interface TranscriptMessage {
  role: "system" | "assistant" | "user";
  text: string;
  images: TranscriptImage[];
}

export interface ToolCall {
  turn: number;
  tool_name: string;
  raw_text: string;
  result_summary: string;
}

export interface Transcript {
  conversation_id: string;
  dataset_kind: string;
  test_image_id: string;
  model_id: string;
  created_at: string;
  messages: TranscriptMessage[];
  tool_calls: ToolCall[];
  final: Prediction | null;
  visrag_pos_id: string | null;
  visrag_neg_id: string | null;
  inconclusive: boolean;
}

export interface ChatSession {
  messages: { role: string; text: string }[];
}

export interface GeoFields {
  lat: number;
  lon: number;
  zoom?: number;
}

export type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

/** Error carrying the HTTP status and the server's body text verbatim. */
export class ApiError extends Error {
  constructor(
    public status: number,
    public body: string,
  ) {
    super(`HTTP ${status}: ${body}`);
  }
}

async function errorOf(res: Response): Promise<ApiError> {
  const text = await res.text();
  try {
    const doc = JSON.parse(text) as { error?: string };
    return new ApiError(res.status, doc.error ?? text);
  } catch {
    return new ApiError(res.status, text);
  }
}

export async function submitClassification(
  file: Blob,
  datasetKind: string,
  geo: GeoFields | null,
  fetchFn: FetchFn = fetch,
): Promise<string> {
  const form = new FormData();
  form.append("image", file, "upload.png");
  form.append("dataset_kind", datasetKind);
  if (geo !== null) {
    form.append("lat", String(geo.lat));
    form.append("lon", String(geo.lon));
    if (geo.zoom !== undefined) form.append("zoom", String(geo.zoom));
  }
  const res = await fetchFn("/classify", { method: "POST", body: form });
  if (res.status !== 202) throw await errorOf(res);
  const doc = (await res.json()) as { job_id: string };
  return doc.job_id;
}

export async function getJob(jobId: string, fetchFn: FetchFn = fetch): Promise<Job> {
  const res = await fetchFn(`/jobs/${encodeURIComponent(jobId)}`);
  if (!res.ok) throw await errorOf(res);
  return (await res.json()) as Job;
}

export async function getTranscript(
  transcriptId: string,
  fetchFn: FetchFn = fetch,
): Promise<Transcript> {
  const res = await fetchFn(`/transcripts/${encodeURIComponent(transcriptId)}`);
  if (!res.ok) throw await errorOf(res);
  return (await res.json()) as Transcript;
}

export async function getChatSession(
  transcriptId: string,
  fetchFn: FetchFn = fetch,
): Promise<ChatSession> {
  const res = await fetchFn(`/transcripts/${encodeURIComponent(transcriptId)}/chat`);
  if (!res.ok) throw await errorOf(res);
  return (await res.json()) as ChatSession;
}

export async function sendChat(
  transcriptId: string,
  text: string,
  fetchFn: FetchFn = fetch,
): Promise<string> {
  const res = await fetchFn(`/transcripts/${encodeURIComponent(transcriptId)}/chat`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ text }),
  });
  if (!res.ok) throw await errorOf(res);
  const doc = (await res.json()) as { reply: string };
  return doc.reply;
}

export async function getHealth(
  fetchFn: FetchFn = fetch,
): Promise<Record<string, string>> {
  const res = await fetchFn("/healthz");
  if (!res.ok) throw await errorOf(res);
  return (await res.json()) as Record<string, string>;
}
