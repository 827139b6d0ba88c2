// Typed client for the classification service REST API. Every function
// takes an injectable fetch so tests can run against a stub backend.
/** Error carrying the HTTP status and the server's body text verbatim. */
export class ApiError extends Error {
    constructor(status, body) {
        super(`HTTP ${status}: ${body}`);
        this.status = status;
        this.body = body;
    }
}
async function errorOf(res) {
    const text = await res.text();
    try {
        const doc = JSON.parse(text);
        return new ApiError(res.status, doc.error ?? text);
    }
    catch {
        return new ApiError(res.status, text);
    }
}
export async function submitClassification(file, datasetKind, geo, fetchFn = fetch) {
    const form = new FormData();
    form.append("image", file, "upload.png");
    form.append("dataset_kind", datasetKind);
    if (geo !== null) {
        form.append("lat", String(geo.lat));
        form.append("lon", String(geo.lon));
        if (geo.zoom !== undefined)
            form.append("zoom", String(geo.zoom));
    }
    const res = await fetchFn("/classify", { method: "POST", body: form });
    if (res.status !== 202)
        throw await errorOf(res);
    const doc = (await res.json());
    return doc.job_id;
}
export async function getJob(jobId, fetchFn = fetch) {
    const res = await fetchFn(`/jobs/${encodeURIComponent(jobId)}`);
    if (!res.ok)
        throw await errorOf(res);
    return (await res.json());
}
export async function getTranscript(transcriptId, fetchFn = fetch) {
    const res = await fetchFn(`/transcripts/${encodeURIComponent(transcriptId)}`);
    if (!res.ok)
        throw await errorOf(res);
    return (await res.json());
}
export async function getChatSession(transcriptId, fetchFn = fetch) {
    const res = await fetchFn(`/transcripts/${encodeURIComponent(transcriptId)}/chat`);
    if (!res.ok)
        throw await errorOf(res);
    return (await res.json());
}
export async function sendChat(transcriptId, text, fetchFn = fetch) {
    const res = await fetchFn(`/transcripts/${encodeURIComponent(transcriptId)}/chat`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ text }),
    });
    if (!res.ok)
        throw await errorOf(res);
    const doc = (await res.json());
    return doc.reply;
}
export async function getHealth(fetchFn = fetch) {
    const res = await fetchFn("/healthz");
    if (!res.ok)
        throw await errorOf(res);
    return (await res.json());
}
