import assert from "node:assert/strict";
import { test } from "node:test";
import { beginRetry, beginSend, chatFromSession, pollDelay, pollResult, sendFailed, sendSucceeded, startSubmit, submitAccepted, submitRejected, } from "../src/state.js";
function job(status, error = null) {
    return {
        job_id: "j1",
        status,
        dataset_kind: "eelgrass",
        submitted_at: "t",
        finished_at: null,
        result: null,
        error,
    };
}
test("poll delay backs off and caps", () => {
    assert.equal(pollDelay(0), 300);
    assert.equal(pollDelay(1), 450);
    assert.ok(pollDelay(10) <= 3000);
    assert.equal(pollDelay(50), 3000);
});
test("upload flow transitions", () => {
    let phase = startSubmit();
    assert.equal(phase.kind, "submitting");
    phase = submitAccepted("j1");
    assert.deepEqual(phase, { kind: "polling", jobId: "j1", attempt: 0 });
    phase = pollResult(phase, job("running"));
    assert.deepEqual(phase, { kind: "polling", jobId: "j1", attempt: 1 });
    const done = job("done");
    phase = pollResult(phase, done);
    assert.deepEqual(phase, { kind: "done", job: done });
});
test("failed job surfaces its error and is retryable", () => {
    const phase = pollResult(submitAccepted("j1"), job("failed", "backend exploded"));
    assert.equal(phase.kind, "failed");
    if (phase.kind === "failed") {
        assert.equal(phase.message, "backend exploded");
        assert.equal(phase.retryable, true);
    }
});
test("rejection classifies retryability by status", () => {
    const busy = submitRejected(503, "LMM backend unavailable");
    assert.equal(busy.kind === "failed" && busy.retryable, true);
    const bad = submitRejected(400, "lat: required for aquaculture uploads");
    assert.equal(bad.kind === "failed" && bad.retryable, false);
});
test("chat double-send is guarded", () => {
    let chat = chatFromSession("t1", []);
    const first = beginSend(chat, "why?");
    assert.equal(first.send, true);
    chat = first.state;
    assert.equal(chat.inFlight, true);
    assert.equal(chat.bubbles.length, 1);
    // a second send while in flight must not add a bubble or fire a request
    const second = beginSend(chat, "why?!");
    assert.equal(second.send, false);
    assert.equal(second.state.bubbles.length, 1);
});
test("blank chat text never sends", () => {
    const chat = chatFromSession("t1", []);
    assert.equal(beginSend(chat, "   ").send, false);
});
test("chat reply appends and clears the guard", () => {
    let chat = chatFromSession("t1", []);
    chat = beginSend(chat, "why?").state;
    chat = sendSucceeded(chat, "because the probe agreed");
    assert.equal(chat.inFlight, false);
    assert.deepEqual(chat.bubbles.map((b) => [b.role, b.text]), [
        ["user", "why?"],
        ["assistant", "because the probe agreed"],
    ]);
    assert.ok(!chat.bubbles.some((b) => b.pending));
});
test("failed send is retryable without duplicating the message", () => {
    let chat = chatFromSession("t1", []);
    chat = beginSend(chat, "why?").state;
    chat = sendFailed(chat);
    assert.equal(chat.inFlight, false);
    assert.equal(chat.bubbles.length, 1);
    assert.equal(chat.bubbles[0].failed, true);
    const retry = beginRetry(chat);
    assert.equal(retry.send, true);
    assert.equal(retry.text, "why?");
    assert.equal(retry.state.bubbles.length, 1);
    assert.equal(retry.state.bubbles[0].pending, true);
    // and the reply lands normally afterwards
    const settled = sendSucceeded(retry.state, "ok");
    assert.equal(settled.bubbles.length, 2);
});
test("reload restores history from the server session", () => {
    const chat = chatFromSession("t1", [
        { role: "user", text: "q1" },
        { role: "assistant", text: "a1" },
    ]);
    assert.equal(chat.bubbles.length, 2);
    assert.equal(chat.inFlight, false);
});
