"""Load a dataset manifest, split it, embed the training images, and
retrieve the most similar positive/negative examples for a test image.

Run:  python demos/01_dataset_and_retrieval.py
"""

from _common import build_demo_dataset, fresh_output

from sciscope.data import load_manifest, subsample_labeled, subsample_test
from sciscope.embeddings import PixelStatsEmbeddingProvider, build_store, retrieve_visrag

out = fresh_output("01_retrieval")
manifest = load_manifest(build_demo_dataset(out / "data"))

print(f"dataset '{manifest.name}': {len(manifest.entries)} images, "
      f"{len(manifest.train)} train / {len(manifest.test)} test, "
      f"positive fraction {manifest.positive_fraction_hint:.2f}")

# low-labeled regime: a 20% stratified subsample of the train split
low = subsample_labeled(manifest, fraction=0.2, seed=0)
full = subsample_labeled(manifest, fraction=1.0, seed=0)
print(f"labeled subsets: 20% -> {len(low)} items, 100% -> {len(full)} items")

provider = PixelStatsEmbeddingProvider(dim=16)
store = build_store(manifest, full, provider)
print(f"embedding store: dim={store.dim}, |positives|={len(store.positives)}, "
      f"|negatives|={len(store.negatives)}")

# retrieve context for each evaluation image
for index in subsample_test(manifest, 4, seed=0):
    image = manifest.load_image(index)
    query = provider.embed_image(image.pixels)
    pos_id, pos_sim, neg_id, neg_sim = retrieve_visrag(store, query)
    print(f"{image.id} (true label {image.label:+d}): "
          f"closest positive {pos_id} (cos {pos_sim:.3f}), "
          f"closest negative {neg_id} (cos {neg_sim:.3f})")
