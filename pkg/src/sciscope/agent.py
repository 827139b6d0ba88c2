"""The inference loop: prompt assembly, turn parsing, tool dispatch, and
transcript recording.

One conversation classifies one image. The system prompt carries the
domain description, the test image, the retrieved positive/negative
examples, and the tool catalog; the model then alternates between
requesting tools (``TOOL: <name>``) and, eventually, answering
(``ANSWER: <positive|negative> CONFIDENCE: <0.00-1.00>``). Everything that
happened -- messages, tool calls, and the final prediction -- is recorded
in a Transcript that serializes losslessly to JSON.
"""

from __future__ import annotations

import json
import re
import time
import uuid
from dataclasses import dataclass, field

import httpx
import numpy as np

from .data import NEGATIVE, POSITIVE, GeoPoint, Prediction
from .embeddings import EmbeddingProvider, EmbeddingStore, retrieve_visrag
from .errors import ContextTooLarge, EmptyRegistry, LlmUnavailable, UnknownTool
from .imaging import from_png_base64, to_png_base64
from .tools import ToolKind, ToolRegistry, ToolSession, new_session

FORCING_MESSAGE = "You must now answer."

TOOL_GRAMMAR = (
    "To use a tool, reply with a single line of the form:\n"
    "TOOL: <ToolName>"
)
ANSWER_GRAMMAR = (
    "To give your final answer, reply with a single line of the form:\n"
    "ANSWER: <positive|negative> CONFIDENCE: <0.00-1.00>"
)

# keywords are exact; only the label word tolerates capitalization
_TOOL_LINE = re.compile(r"^\s*TOOL:\s*([A-Za-z0-9_]+)\s*$")
_ANSWER_LINE = re.compile(
    r"^\s*ANSWER:\s*([Pp]ositive|[Nn]egative)\s+CONFIDENCE:\s*(1(?:\.0+)?|0?\.\d+|0)\s*$"
)


@dataclass
class Attachment:
    caption: str
    image: np.ndarray


@dataclass
class Message:
    role: str  # system | assistant | user
    text: str
    images: list[Attachment] = field(default_factory=list)


@dataclass(frozen=True)
class ToolRequest:
    tool_name: str
    raw_text: str


@dataclass(frozen=True)
class FinalAnswer:
    label: int
    confidence: float


@dataclass
class ToolCallRecord:
    turn: int  # 1-based index of the assistant message that requested it
    tool_name: str
    raw_text: str
    result_summary: str


@dataclass
class AgentConfig:
    max_turns: int = 4
    min_tools_encouraged: int = 3
    temperature: float = 0.0
    seed: int | None = None
    domain_prompt: str = ""

    def __post_init__(self):
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")
        if self.min_tools_encouraged > self.max_turns:
            raise ValueError("min_tools_encouraged cannot exceed max_turns")


@dataclass
class Transcript:
    conversation_id: str
    dataset_kind: str
    test_image_id: str
    model_id: str
    created_at: str
    messages: list[Message] = field(default_factory=list)
    tool_calls: list[ToolCallRecord] = field(default_factory=list)
    final: Prediction | None = None
    visrag_pos_id: str | None = None
    visrag_neg_id: str | None = None
    inconclusive: bool = False

    def to_json(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "dataset_kind": self.dataset_kind,
            "test_image_id": self.test_image_id,
            "model_id": self.model_id,
            "created_at": self.created_at,
            "visrag_pos_id": self.visrag_pos_id,
            "visrag_neg_id": self.visrag_neg_id,
            "inconclusive": self.inconclusive,
            "final": self.final.to_json() if self.final else None,
            "messages": [
                {
                    "role": m.role,
                    "text": m.text,
                    "images": [
                        {"caption": a.caption, "png_b64": to_png_base64(a.image)}
                        for a in m.images
                    ],
                }
                for m in self.messages
            ],
            "tool_calls": [
                {
                    "turn": c.turn,
                    "tool_name": c.tool_name,
                    "raw_text": c.raw_text,
                    "result_summary": c.result_summary,
                }
                for c in self.tool_calls
            ],
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, doc: dict) -> "Transcript":
        t = cls(
            conversation_id=doc["conversation_id"],
            dataset_kind=doc["dataset_kind"],
            test_image_id=doc["test_image_id"],
            model_id=doc["model_id"],
            created_at=doc["created_at"],
            visrag_pos_id=doc.get("visrag_pos_id"),
            visrag_neg_id=doc.get("visrag_neg_id"),
            inconclusive=doc.get("inconclusive", False),
        )
        if doc.get("final"):
            t.final = Prediction.from_json(doc["final"])
        for m in doc["messages"]:
            t.messages.append(
                Message(
                    role=m["role"],
                    text=m["text"],
                    images=[
                        Attachment(caption=a["caption"], image=from_png_base64(a["png_b64"]))
                        for a in m["images"]
                    ],
                )
            )
        for c in doc["tool_calls"]:
            t.tool_calls.append(
                ToolCallRecord(
                    turn=c["turn"],
                    tool_name=c["tool_name"],
                    raw_text=c["raw_text"],
                    result_summary=c["result_summary"],
                )
            )
        return t


# --- assistant-turn grammar ---


def parse_assistant_turn(text: str):
    """Parse one assistant message into its intent.

    Returns a FinalAnswer when an ANSWER line is present (final intent
    dominates even if tool lines also appear), else the first TOOL line as
    a ToolRequest (the name is not validated here; unknown names are
    answered by the executor), else None for an unparseable turn.
    """
    lines = text.splitlines()
    for line in lines:
        m = _ANSWER_LINE.match(line)
        if m:
            label = POSITIVE if m.group(1).lower() == "positive" else NEGATIVE
            return FinalAnswer(label=label, confidence=float(m.group(2)))
    for line in lines:
        m = _TOOL_LINE.match(line)
        if m:
            return ToolRequest(tool_name=m.group(1), raw_text=line.strip())
    return None


def render_tool_request(request: ToolRequest) -> str:
    return f"TOOL: {request.tool_name}"


def render_final_answer(answer: FinalAnswer) -> str:
    word = "positive" if answer.label == POSITIVE else "negative"
    return f"ANSWER: {word} CONFIDENCE: {answer.confidence:.2f}"


# --- LMM clients ---


class LmmClient:
    """Chat interface over interleaved text and images."""

    model_id: str = "abstract"

    def chat(self, messages: list[Message], temperature: float = 0.0, seed: int | None = None) -> str:
        raise NotImplementedError

    def check_health(self) -> bool:
        return True


class ScriptedLmmClient(LmmClient):
    """Replays a fixed list of assistant turns; for tests and fixtures.

    The internal cursor rewinds whenever a conversation starts over (the
    incoming message list contains only the system prompt), so one client
    instance can serve many conversations. Once a script is exhausted the
    configured fallback line is returned.
    """

    def __init__(self, turns: list[str], fallback: str = "I have nothing further to add."):
        self.turns = list(turns)
        self.fallback = fallback
        self.model_id = "scripted"
        self.calls = 0
        self._cursor = 0

    def chat(self, messages, temperature=0.0, seed=None) -> str:
        self.calls += 1
        if len(messages) == 1:
            self._cursor = 0
        if self._cursor < len(self.turns):
            turn = self.turns[self._cursor]
            self._cursor += 1
            return turn
        return self.fallback


class PolicyLmmClient(LmmClient):
    """Delegates each turn to a policy callable; for offline simulation."""

    def __init__(self, policy, model_id: str = "policy"):
        self.policy = policy
        self.model_id = model_id
        self.calls = 0

    def chat(self, messages, temperature=0.0, seed=None) -> str:
        self.calls += 1
        return self.policy(messages)


def simulation_policy(messages: list[Message]) -> str:
    """Built-in heuristic used for offline simulation runs.

    Requests the prediction tool once when the prompt offers one, then
    answers from the returned probability; without tools it answers
    negative at even confidence.
    """
    system = messages[0].text
    predict_name = None
    for line in system.splitlines():
        m = re.match(r"^- (Predict\w+Tool):", line)
        if m:
            predict_name = m.group(1)
            break
    for message in reversed(messages):
        if message.role != "user":
            continue
        m = re.search(r"probability of (\d\.\d+)", message.text)
        if m:
            p = float(m.group(1))
            if p > 0.5:
                return f"ANSWER: positive CONFIDENCE: {p:.2f}"
            return f"ANSWER: negative CONFIDENCE: {1.0 - p:.2f}"
    if predict_name is not None and not any(m.role == "assistant" for m in messages):
        return f"TOOL: {predict_name}"
    return "ANSWER: negative CONFIDENCE: 0.50"


class _RateGate:
    """Caps concurrent requests and smooths them to a per-minute budget."""

    def __init__(self, max_in_flight: int, requests_per_minute: int | None):
        import threading

        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self._interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self._next_allowed = 0.0

    def __enter__(self):
        self._slots.acquire()
        if self._interval:
            with self._lock:
                now = time.monotonic()
                wait = self._next_allowed - now
                self._next_allowed = max(now, self._next_allowed) + self._interval
            if wait > 0:
                time.sleep(wait)
        return self

    def __exit__(self, *exc):
        self._slots.release()
        return False


class HttpLmmClient(LmmClient):
    """Client speaking a chat-completion wire protocol with image parts.

    Requests are JSON ``{model, temperature, seed?, messages:[{role,
    content:[{type: "text"|"image", ...}]}]}`` with images as base64 PNG
    data URLs; the assistant text is read from the first choice. Transient
    failures are retried with exponential backoff before raising
    LlmUnavailable. Concurrent callers share an in-flight cap and an
    optional per-minute budget.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        retries: int = 3,
        backoff: float = 0.5,
        max_images: int = 50,
        max_in_flight: int = 4,
        requests_per_minute: int | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.model_id = model
        self.retries = retries
        self.backoff = backoff
        self.max_images = max_images
        self._gate = _RateGate(max_in_flight, requests_per_minute)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def build_request_body(
        self, messages: list[Message], temperature: float = 0.0, seed: int | None = None
    ) -> bytes:
        """Serialize the request deterministically (auth lives in headers)."""
        wire_messages = []
        for message in messages:
            content: list[dict] = [{"type": "text", "text": message.text}]
            for attachment in message.images:
                content.append(
                    {
                        "type": "image",
                        "caption": attachment.caption,
                        "url": "data:image/png;base64," + to_png_base64(attachment.image),
                    }
                )
            wire_messages.append({"role": message.role, "content": content})
        body: dict = {
            "model": self.model_id,
            "temperature": temperature,
            "messages": wire_messages,
        }
        if seed is not None:
            body["seed"] = seed
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()

    def chat(self, messages, temperature=0.0, seed=None) -> str:
        n_images = sum(len(m.images) for m in messages)
        if n_images > self.max_images:
            raise ContextTooLarge(f"{n_images} attached images exceed the limit {self.max_images}")
        body = self.build_request_body(messages, temperature, seed)
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                with self._gate:
                    resp = self._client.post(
                        self.endpoint, content=body, headers={"Content-Type": "application/json"}
                    )
                if resp.status_code >= 500:
                    raise httpx.HTTPStatusError(
                        f"server error {resp.status_code}", request=resp.request, response=resp
                    )
                resp.raise_for_status()
                choice = resp.json()["choices"][0]["message"]["content"]
                if isinstance(choice, list):  # some backends return content parts
                    choice = "".join(p.get("text", "") for p in choice)
                return choice
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_error = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * 2**attempt)
        raise LlmUnavailable(
            f"chat endpoint {self.endpoint} unavailable after {self.retries} attempts: "
            f"{last_error}",
            retries=self.retries,
        )

    def check_health(self) -> bool:
        try:
            self._client.get(self.endpoint)
            return True
        except httpx.TransportError:
            return False


# --- prompt assembly ---


def assemble_system_prompt(
    config: AgentConfig,
    registry: ToolRegistry | None,
    pos_example: tuple[np.ndarray, float] | None,
    neg_example: tuple[np.ndarray, float] | None,
    test_image: np.ndarray,
) -> Message:
    """Build the single system message that opens a conversation.

    ``registry=None`` omits the tool catalog (retrieval-only and zero-shot
    variants); an explicitly empty registry is rejected. ``pos_example`` /
    ``neg_example`` are (raster, similarity) pairs and may be None for the
    tools-only and zero-shot variants.
    """
    if registry is not None and len(registry) == 0:
        raise EmptyRegistry("registry has no tools; pass registry=None to disable tools")
    if (pos_example is None) != (neg_example is None):
        raise ValueError("retrieved examples must be given as a pair or not at all")

    sections: list[str] = []
    attachments: list[Attachment] = [Attachment(caption="Test image", image=test_image)]
    if config.domain_prompt:
        sections.append(config.domain_prompt)
    sections.append("The image to classify is attached as: Test image.")

    if pos_example is not None:
        pos_raster, pos_sim = pos_example
        neg_raster, neg_sim = neg_example
        attachments.append(
            Attachment(caption=f"Known positive example (similarity {pos_sim:.4f})", image=pos_raster)
        )
        attachments.append(
            Attachment(caption=f"Known negative example (similarity {neg_sim:.4f})", image=neg_raster)
        )
        sections.append(
            "Two labeled training images most similar to the test image are attached "
            "for comparison:\n"
            f"- Known positive example (similarity {pos_sim:.4f}): this image is a confirmed "
            "POSITIVE.\n"
            f"- Known negative example (similarity {neg_sim:.4f}): this image is a confirmed "
            "NEGATIVE."
        )

    if registry is not None:
        catalog = "\n".join(f"- {d.name}: {d.description}" for d in registry.descriptors())
        sections.append("You may use the following tools:\n" + catalog)
        sections.append(TOOL_GRAMMAR)

    sections.append(ANSWER_GRAMMAR)

    instructions = []
    if registry is not None:
        instructions.append(
            f"Use at least {config.min_tools_encouraged} tools before giving your final answer."
        )
    instructions.append(
        f"You must give your final answer within {config.max_turns} conversation turns."
    )
    sections.append(" ".join(instructions))

    return Message(role="system", text="\n\n".join(sections), images=attachments)


# --- the loop ---

_UNPARSEABLE_REPLY = (
    "Your reply could not be parsed. Request a tool with 'TOOL: <ToolName>' or answer with "
    "'ANSWER: <positive|negative> CONFIDENCE: <0.00-1.00>'."
)


def _unknown_tool_reply(name: str, registry: ToolRegistry | None) -> str:
    if registry is None or len(registry) == 0:
        return (
            f"Unknown tool '{name}': no tools are available in this conversation. "
            "Please give your final answer."
        )
    return f"Unknown tool '{name}'. Valid tools: {', '.join(registry.names())}."


def run_inference(
    test_image,
    llm: LmmClient,
    config: AgentConfig,
    store: EmbeddingStore | None = None,
    registry: ToolRegistry | None = None,
    embedder: EmbeddingProvider | None = None,
    example_loader=None,
    dataset_kind: str = "",
    view_size: tuple[int, int] | None = None,
    conversation_id: str | None = None,
    created_at: str | None = None,
) -> tuple[Prediction, Transcript]:
    """Classify one image through a bounded multi-turn conversation.

    ``test_image`` needs ``id``, ``pixels``, and ``geo`` attributes (either
    a LabeledImage or a QueryImage). When a store is given, ``embedder``
    embeds the test image and ``example_loader(image_id)`` must return the
    raster of a retrieved training example. The loop always terminates
    within ``config.max_turns + 1`` model calls; if no parseable answer
    arrives by then, the inconclusive fallback (negative at confidence 0.5)
    is recorded and flagged.
    """
    registry_active = registry if registry is not None and len(registry) > 0 else None

    pos_example = neg_example = None
    visrag_pos_id = visrag_neg_id = None
    if store is not None:
        if embedder is None or example_loader is None:
            raise ValueError("retrieval needs both an embedder and an example_loader")
        query = embedder.embed_image(test_image.pixels)
        visrag_pos_id, pos_sim, visrag_neg_id, neg_sim = retrieve_visrag(store, query)
        pos_example = (example_loader(visrag_pos_id), pos_sim)
        neg_example = (example_loader(visrag_neg_id), neg_sim)

    system = assemble_system_prompt(
        config, registry_active, pos_example, neg_example, test_image.pixels
    )
    messages: list[Message] = [system]

    geo: GeoPoint | None = getattr(test_image, "geo", None)
    session: ToolSession = new_session(test_image.pixels, geo, dataset_kind, view_size)

    transcript = Transcript(
        conversation_id=conversation_id or uuid.uuid4().hex,
        dataset_kind=dataset_kind,
        test_image_id=test_image.id,
        model_id=llm.model_id,
        created_at=created_at or time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        messages=messages,
        visrag_pos_id=visrag_pos_id,
        visrag_neg_id=visrag_neg_id,
    )

    final: Prediction | None = None
    for turn in range(1, config.max_turns + 1):
        text = llm.chat(messages, temperature=config.temperature, seed=config.seed)
        messages.append(Message(role="assistant", text=text))
        parsed = parse_assistant_turn(text)

        if isinstance(parsed, FinalAnswer):
            final = Prediction(label=parsed.label, confidence=parsed.confidence)
            break

        if isinstance(parsed, ToolRequest):
            if registry_active is not None and parsed.tool_name in registry_active:
                try:
                    result = registry_active.execute(parsed.tool_name, session)
                    transcript.tool_calls.append(
                        ToolCallRecord(
                            turn=turn,
                            tool_name=parsed.tool_name,
                            raw_text=parsed.raw_text,
                            result_summary=result.message,
                        )
                    )
                    images = []
                    if result.image is not None:
                        images = [
                            Attachment(caption=f"Result of {parsed.tool_name}", image=result.image)
                        ]
                    messages.append(Message(role="user", text=result.message, images=images))
                except UnknownTool:
                    messages.append(
                        Message(role="user", text=_unknown_tool_reply(parsed.tool_name, registry_active))
                    )
                except Exception as exc:  # tool/provider failures stay in-conversation
                    messages.append(
                        Message(
                            role="user",
                            text=f"Tool {parsed.tool_name} failed: {exc}. "
                            "You may try another tool or give your final answer.",
                        )
                    )
            else:
                messages.append(
                    Message(role="user", text=_unknown_tool_reply(parsed.tool_name, registry_active))
                )
        else:
            messages.append(Message(role="user", text=_UNPARSEABLE_REPLY))

    if final is None:
        messages.append(Message(role="user", text=FORCING_MESSAGE))
        text = llm.chat(messages, temperature=config.temperature, seed=config.seed)
        messages.append(Message(role="assistant", text=text))
        parsed = parse_assistant_turn(text)
        if isinstance(parsed, FinalAnswer):
            final = Prediction(label=parsed.label, confidence=parsed.confidence)
        else:
            final = Prediction(label=NEGATIVE, confidence=0.5, inconclusive=True)
            transcript.inconclusive = True

    transcript.final = final
    return final, transcript


def save_transcript(transcript: Transcript, out_dir) -> str:
    """Write transcripts/<conversation_id>.json under ``out_dir``."""
    from pathlib import Path

    directory = Path(out_dir) / "transcripts"
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{transcript.conversation_id}.json"
    path.write_text(transcript.to_json_text())
    return str(path)
