"""
Which cube sits on which
========================

A thousand unit cubes dropped into columns.  A graph autoencoder sees the
cube poses and most of the "on top of" edges and must recover the held-out
ones.
"""
from unisg.datasets import cube_features, gen_cube_stack, on_top_pairs_bruteforce
from unisg.experiments import cube_task
from unisg.nn.train import LinkPredConfig, train_linkpred
from unisg.xform import Form

scene, on_top = gen_cube_stack(200, seed=0)
_, ids = cube_features(scene)
centres = {e: scene.world_transform(e)[:3, 3] for e in ids}
print("generator edges match brute force:", sorted(on_top) == sorted(on_top_pairs_bruteforce(centres)))

X, edges = cube_task(1000, 0, Form.DUAL_QUAT)
result = train_linkpred(X, edges, LinkPredConfig(epochs=30, seed=0))
for epoch in (0, 5, 15, 30):
    print(f"epoch {epoch:2d}  loss {result.epoch_loss[epoch]:.3f}  held-out AUC {result.auc[epoch]:.3f}")
