"""Train the frozen-embedding MLP probe, check its gradients against
finite differences, and use it as a standalone classifier.

Run:  python demos/02_probe_training.py
"""

import numpy as np
from _common import build_demo_dataset, fresh_output

from sciscope.data import load_manifest
from sciscope.embeddings import PixelStatsEmbeddingProvider, build_store
from sciscope.probe import TrainConfig, gradient_check, mlp_forward, save_params, train_mlp

out = fresh_output("02_probe")
manifest = load_manifest(build_demo_dataset(out / "data"))
provider = PixelStatsEmbeddingProvider(dim=16)
store = build_store(manifest, manifest.train, provider)

pairs = [(vec, 1) for _, vec in store.positives]
pairs += [(vec, -1) for _, vec in store.negatives]

losses = []
params = train_mlp(pairs, TrainConfig(seed=0), on_epoch=lambda e, loss: losses.append(loss))
print("per-epoch loss:", " ".join(f"{loss:.4f}" for loss in losses))

rel_err = gradient_check(params, pairs[0][0], label=1)
print(f"gradient check vs central differences: max relative error {rel_err:.2e}")

correct = 0
for index in manifest.test:
    image = manifest.load_image(index)
    p = mlp_forward(params, provider.embed_image(image.pixels))
    predicted = 1 if p > 0.5 else -1
    correct += predicted == image.label
    print(f"{image.id}: P(positive) = {p:.3f}, predicted {predicted:+d}, true {image.label:+d}")
print(f"test accuracy: {correct}/{len(manifest.test)}")

save_params(params, out / "probe.json", TrainConfig(seed=0))
print(f"weights saved to {out / 'probe.json'}")
