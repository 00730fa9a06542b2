"""
Generating operating rooms
==========================

A conditional graph VAE learns node features and adjacency from a hundred
operating-room variations.  Given a list of categories it samples a new
graph with those nodes.
"""
import numpy as np

from unisg.datasets import gen_or_dataset
from unisg.export import Vocabulary, export_tensors
from unisg.nn.train import CGVAEConfig, generate_scene, train_cgvae
from unisg.xform import Form

scenes = gen_or_dataset(100, seed=0)
vocab = Vocabulary.from_scenes(scenes)
graphs = [export_tensors(s, Form.QUAT_T, vocab, 64) for s in scenes]

result = train_cgvae(graphs, len(vocab), CGVAEConfig(epochs=60, seed=0))
for epoch in (0, 10, 30, 60):
    print(f"epoch {epoch:3d}  mean loss {result.epoch_loss[epoch]:.3f}")

sample = generate_scene(result.model, graphs[0].categories, seed=1, scaler=result.scaler)
print("sampled", sample.N, "nodes,", int(sample.A.sum() // 2), "edges")
print("symmetric:", np.array_equal(sample.A, sample.A.T), " self loops:", int(np.trace(sample.A)))
names = [vocab.names[c] for c in sample.categories]
first = [names[j] for j in np.flatnonzero(sample.A[0])]
print(f"{names[0]} is linked to: {', '.join(first) or 'nothing'}")
