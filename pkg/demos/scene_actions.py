"""
A small operating room as an entity-component scene
===================================================

Entities form a tree.  Components hang off entities: a pose, a mesh
descriptor, an info census, and actions.  The scalpel carries an "insert"
action that is satisfied once its tip sits inside a box around the knee.
"""
import numpy as np

from unisg.datasets import OPERATING_ROOM, instantiate
from unisg.xform import Form, from_qts

scene = instantiate(OPERATING_ROOM, seed=0, form=Form.DUAL_QUAT)
for eid in scene.iter_depth_first():
    kinds = ", ".join(sorted(scene.components[eid]))
    print(f"{scene.path(eid):<55} [{kinds}]")

knee = next(e for e in scene.entities if scene.entities[e].name == "Knee")
scalpel = next(e for e in scene.entities if scene.entities[e].name == "Scalpel")
print("\nknee world position   ", scene.world_transform(knee)[:3, 3].round(3))
print("scalpel world position", scene.world_transform(scalpel)[:3, 3].round(3))
print("insert satisfied?", [r.satisfied for r in scene.run_action_system("insert")])

###############################################################################
# Move the scalpel onto the knee.  The scalpel lives under the tray, so we
# express the knee position in the tray frame first.

tray = scene.entities[scalpel].parent
target_local = np.linalg.inv(scene.world_transform(tray)) @ scene.world_transform(knee)[:, 3]
trs = scene.get(scalpel, "trs")
trs.repr = from_qts([1, 0, 0, 0], target_local[:3], np.ones(3), trs.repr.form)
print("after the move:", [r.satisfied for r in scene.run_action_system("insert")])

# the info component keeps a census of each entity's children
print("patient census:", scene.get(scene.entities[knee].parent, "info").child_type_counts)
