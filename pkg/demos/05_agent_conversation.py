"""Run one full agent conversation over a test image -- retrieval context,
tool calls, final answer -- and print the transcript.

The model here is the offline simulation policy (it asks for the
prediction tool and answers from its probability), so no API key or
network is needed; swap in HttpLmmClient for a live model.

Run:  python demos/05_agent_conversation.py
"""

from _common import build_demo_dataset, fresh_output

from sciscope.agent import AgentConfig, PolicyLmmClient, run_inference, save_transcript, simulation_policy
from sciscope.data import load_manifest
from sciscope.embeddings import PixelStatsEmbeddingProvider, build_store
from sciscope.evaluation import DOMAIN_PROMPTS
from sciscope.probe import TrainConfig, train_mlp
from sciscope.tools import build_registry

out = fresh_output("05_agent")
manifest = load_manifest(build_demo_dataset(out / "data"))
provider = PixelStatsEmbeddingProvider(dim=16)
store = build_store(manifest, manifest.train, provider)
pairs = [(v, 1) for _, v in store.positives] + [(v, -1) for _, v in store.negatives]
probe = train_mlp(pairs, TrainConfig(seed=0))
registry = build_registry("eelgrass", probe=probe, embedder=provider)

test_image = manifest.load_image(manifest.test[0])
print(f"classifying {test_image.id} (true label {test_image.label:+d})\n")

prediction, transcript = run_inference(
    test_image,
    PolicyLmmClient(simulation_policy),
    AgentConfig(domain_prompt=DOMAIN_PROMPTS["eelgrass"]),
    store=store,
    registry=registry,
    embedder=provider,
    example_loader=lambda image_id: manifest.load_image_by_id(image_id).pixels,
    dataset_kind="eelgrass",
)

for message in transcript.messages:
    attachments = f" [{len(message.images)} image(s)]" if message.images else ""
    body = message.text if len(message.text) < 300 else message.text[:280] + " ..."
    print(f"--- {message.role}{attachments}\n{body}\n")

print(f"retrieved examples: +{transcript.visrag_pos_id} / -{transcript.visrag_neg_id}")
print(f"tool calls: {[c.tool_name for c in transcript.tool_calls]}")
print(f"final: label {prediction.label:+d}, confidence {prediction.confidence:.2f}, "
      f"score {prediction.score:.2f}")
path = save_transcript(transcript, out)
print(f"transcript saved to {path}")
