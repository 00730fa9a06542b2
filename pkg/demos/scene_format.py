"""
Scenes as text
==============

Scenes serialize to a small brace-delimited format.  Parsing the text gives
back a structurally equal scene, and mistakes are reported with a line and
a column.
"""
from unisg.datasets import LIVING_ROOM, instantiate
from unisg.sceneio import SceneParseError, parse, serialize
from unisg.xform import Form

scene = instantiate(LIVING_ROOM, form=Form.QUAT_T)
for comp in scene.components.values():
    comp.pop("mesh", None)  # keep the listing short
text = serialize(scene)
print("\n".join(text.splitlines()[:18]))
print("...")

back = parse(text).scene
print("round trip structurally equal:", back.structurally_equal(scene))
print("serializer idempotent:", serialize(back) == text)

# drop a closing brace and see where the parser points
lines = text.splitlines()
k = next(i for i, line in enumerate(lines) if line.strip() == "}")
broken = "\n".join(lines[:k] + lines[k + 1:])
print(f"removed line {k + 1}: {lines[k].strip()!r}")
try:
    parse(broken)
except SceneParseError as err:
    print("error:", err)
