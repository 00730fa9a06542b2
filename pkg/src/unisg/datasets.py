"""Procedural scenes: two room templates, noise augmentation, cube stacks.

The operating room and living room templates use disjoint category names and
different primitive shapes, so the two classes are separable by construction.
Positions are in metres with z up; rotations are yaw angles in degrees.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .export import trs_feature
from .scenegraph import (
    ActionDataComponent,
    InfoComponent,
    MeshFeatureComponent,
    Scene,
    TRSComponent,
    mesh_feature,
    sample_primitive,
)
from .xform import Form, convert, from_qts, quat_from_angle_axis, quat_mul, to_qts


@dataclass(frozen=True)
class EntityBlueprint:
    name: str
    category: str
    parent: str | None
    position: tuple
    yaw: float = 0.0
    scale: float = 1.0
    primitive: str = "box"
    size: tuple = (1.0, 1.0, 1.0)
    optional: bool = False


@dataclass(frozen=True)
class ActionBlueprint:
    owner: str
    action_type: str
    params: tuple
    refs: tuple


@dataclass(frozen=True)
class SceneTemplate:
    name: str
    label: int
    entities: tuple
    actions: tuple = ()


E = EntityBlueprint

OPERATING_ROOM = SceneTemplate(
    "operating_room",
    0,
    (
        E("OperatingRoom", "OperatingRoom", None, (0, 0, 0), 0, 1.0, "box", (8, 8, 3)),
        E("OperatingTable", "OperatingTable", "OperatingRoom", (0, 0, 0.9), 0, 1.0, "box", (2.0, 0.8, 0.1)),
        E("Patient", "Patient", "OperatingTable", (0, 0, 0.2), 0, 1.0, "cylinder", (0.5, 0.3, 1.7)),
        E("Knee", "Knee", "Patient", (0.3, 0.1, 0.1), 0, 1.0, "sphere", (0.15, 0.15, 0.15)),
        E("InstrumentTray", "InstrumentTray", "OperatingRoom", (1.2, 0.8, 1.0), 15, 1.0, "box", (0.6, 0.4, 0.05)),
        E("Scalpel", "Scalpel", "InstrumentTray", (0.1, 0.0, 0.03), 30, 1.0, "box", (0.15, 0.02, 0.01)),
        E("Forceps", "Forceps", "InstrumentTray", (-0.1, 0.05, 0.03), -20, 1.0, "box", (0.12, 0.03, 0.01), True),
        E("SurgicalLamp", "SurgicalLamp", "OperatingRoom", (0, 0, 2.4), 0, 1.0, "cone", (0.8, 0.8, 0.4), True),
        E("Monitor", "Monitor", "OperatingRoom", (-1.5, 1.0, 1.5), -45, 1.0, "box", (0.6, 0.05, 0.4), True),
        E("AnesthesiaMachine", "AnesthesiaMachine", "OperatingRoom", (-1.5, -1.0, 0.7), 90, 1.0, "box",
          (0.6, 0.6, 1.4), True),
        E("IVStand", "IVStand", "OperatingRoom", (1.0, -1.0, 1.0), 0, 1.0, "cylinder", (0.05, 0.05, 2.0), True),
        E("Cabinet", "Cabinet", "OperatingRoom", (3.0, 3.0, 1.0), 180, 1.0, "box", (1.0, 0.5, 2.0), True),
        E("Stool", "Stool", "OperatingRoom", (0.8, -0.6, 0.3), 0, 1.0, "cylinder", (0.4, 0.4, 0.6), True),
    ),
    (ActionBlueprint("Scalpel", "insert", (-0.1, -0.1, -0.1, 0.1, 0.1, 0.1), ("Scalpel", "Knee")),),
)

LIVING_ROOM = SceneTemplate(
    "living_room",
    1,
    (
        E("LivingRoom", "LivingRoom", None, (0, 0, 0), 0, 1.0, "box", (6, 5, 2.7)),
        E("Sofa", "Sofa", "LivingRoom", (0, -1.8, 0.4), 0, 1.0, "box", (2.2, 0.9, 0.8)),
        E("Cushion", "Cushion", "Sofa", (0.5, 0.1, 0.35), 10, 1.0, "box", (0.4, 0.4, 0.12), True),
        E("TVStand", "TVStand", "LivingRoom", (0, 2.2, 0.3), 180, 1.0, "box", (1.6, 0.4, 0.6)),
        E("TV", "TV", "TVStand", (0, 0, 0.65), 0, 1.0, "plane", (1.2, 0.7, 1.0)),
        E("CoffeeTable", "CoffeeTable", "LivingRoom", (0, 0, 0.25), 0, 1.0, "cylinder", (1.0, 1.0, 0.45)),
        E("Remote", "Remote", "CoffeeTable", (0.2, 0.1, 0.25), 60, 1.0, "box", (0.18, 0.05, 0.02), True),
        E("FloorLamp", "FloorLamp", "LivingRoom", (2.3, -1.8, 0.9), 0, 1.0, "cone", (0.4, 0.4, 1.8), True),
        E("Rug", "Rug", "LivingRoom", (0, 0, 0.01), 0, 1.0, "plane", (3.0, 2.0, 1.0), True),
        E("Bookshelf", "Bookshelf", "LivingRoom", (-2.7, 1.0, 1.0), 90, 1.0, "box", (1.2, 0.35, 2.0), True),
        E("Armchair", "Armchair", "LivingRoom", (1.8, 0.3, 0.4), -90, 1.0, "box", (0.9, 0.9, 0.8), True),
        E("Plant", "Plant", "LivingRoom", (-2.5, -2.0, 0.5), 0, 1.0, "sphere", (0.6, 0.6, 0.8), True),
        E("Painting", "Painting", "LivingRoom", (0, -2.45, 1.7), 0, 1.0, "torus", (1.0, 0.7, 0.05), True),
    ),
)

TEMPLATES = {t.name: t for t in (OPERATING_ROOM, LIVING_ROOM)}


@lru_cache(maxsize=None)
def _primitive_feature(kind, size, seed):
    return mesh_feature(sample_primitive(kind, 512, seed, size))


def _yaw_quat(deg):
    return quat_from_angle_axis(np.radians(deg), (0.0, 0.0, 1.0))


def instantiate(template: SceneTemplate, seed: int = 0, form=Form.MATRIX, include=None, offsets=None) -> Scene:
    """Build a scene from a template.

    ``include`` limits which entity names are created (parents must be
    included with their children); ``offsets`` maps names to extra
    translations.  Every entity gets info, TRS and mesh components.
    """
    scene = Scene(template.name, {"template": template.name, "label": template.label})
    ids = {}
    for bp in template.entities:
        if include is not None and bp.name not in include:
            continue
        parent = None if bp.parent is None else ids[bp.parent]
        eid = scene.add_entity(bp.name, bp.category, parent)
        ids[bp.name] = eid
        pos = np.asarray(bp.position, dtype=float)
        if offsets and bp.name in offsets:
            pos = pos + offsets[bp.name]
        trs = from_qts(_yaw_quat(bp.yaw), pos, np.full(3, bp.scale), form)
        scene.add_component(eid, InfoComponent())
        scene.add_component(eid, TRSComponent(trs))
        scene.add_component(eid, MeshFeatureComponent(_primitive_feature(bp.primitive, tuple(bp.size), seed)))
    for act in template.actions:
        if act.owner in ids and all(r in ids for r in act.refs):
            comp = ActionDataComponent(act.action_type, act.params, [ids[r] for r in act.refs])
            scene.add_component(ids[act.owner], comp)
    scene.refresh_info()
    return scene


# -- augmentation ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentationConfig:
    seed: int = 0
    translation_sigma: float = 0.05  # fraction of the scene diameter
    rotation_max_deg: float = 5.0
    mesh_sigma: float = 0.01

    def __post_init__(self):
        if self.translation_sigma < 0 or self.mesh_sigma < 0:
            raise ValueError("noise magnitudes must be non-negative")
        if not 0 <= self.rotation_max_deg < 180:
            raise ValueError("rotation noise must lie in [0, 180) degrees")


def scene_diameter(scene: Scene) -> float:
    pos = np.array([scene.world_transform(e)[:3, 3] for e in scene.iter_depth_first()])
    if len(pos) < 2:
        return 1.0
    d = float(np.linalg.norm(pos.max(axis=0) - pos.min(axis=0)))
    return d if d > 0 else 1.0


def random_unit_vector(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def augment(scene: Scene, config: AugmentationConfig | None = None) -> Scene:
    """Perturb poses and mesh features; topology, categories and actions are untouched."""
    config = config or AugmentationConfig()
    rng = np.random.default_rng(config.seed)
    out = scene.copy()
    sigma_t = config.translation_sigma * scene_diameter(scene)
    max_angle = np.radians(config.rotation_max_deg)
    for eid in out.iter_depth_first():
        slots = out.components[eid]
        trs = slots.get("trs")
        if trs is not None and (sigma_t > 0 or max_angle > 0):
            q, t, s = to_qts(trs.repr)
            t = t + rng.normal(0.0, sigma_t, 3)
            noise = quat_from_angle_axis(rng.uniform(0.0, max_angle), random_unit_vector(rng))
            q = quat_mul(noise, q)
            trs.repr = from_qts(q / np.linalg.norm(q), t, s, trs.repr.form)
        mesh = slots.get("mesh")
        if mesh is not None and config.mesh_sigma > 0:
            mesh.feature = mesh.feature + rng.normal(0.0, config.mesh_sigma, mesh.feature.shape)
    return out


def classification_dataset(n_per_class: int = 50, seed: int = 0, form=Form.MATRIX, config=None):
    """``n_per_class`` augmentations of each template, as ``(scene, label)`` pairs."""
    config = config or AugmentationConfig()
    out = []
    for template in (OPERATING_ROOM, LIVING_ROOM):
        base = instantiate(template, 0, form)
        for k in range(n_per_class):
            aug_seed = (seed * 1_000_003 + template.label * 10_007 + k)
            cfg = AugmentationConfig(aug_seed, config.translation_sigma, config.rotation_max_deg, config.mesh_sigma)
            out.append((augment(base, cfg), template.label))
    return out


# -- operating-room variations ---------------------------------------------------------------

OR_CORE = ("OperatingRoom", "OperatingTable", "Patient", "Knee", "InstrumentTray", "Scalpel")


def random_or_scene(seed: int, form=Form.MATRIX, keep_prob: float = 0.7, zone_jitter: float = 0.5) -> Scene:
    """An operating room with a random subset of optional props, each shifted within its zone."""
    rng = np.random.default_rng(seed)
    include = set(OR_CORE)
    offsets = {}
    for bp in OPERATING_ROOM.entities:
        if bp.optional and rng.random() < keep_prob:
            include.add(bp.name)
        if bp.parent == "OperatingRoom":
            offsets[bp.name] = np.append(rng.uniform(-zone_jitter, zone_jitter, 2), 0.0)
    scene = instantiate(OPERATING_ROOM, 0, form, include, offsets)
    scene.name = f"operating_room_{seed}"
    return scene


def gen_or_dataset(n: int, seed: int = 0, form=Form.MATRIX) -> list[Scene]:
    if n < 1:
        raise ValueError("need at least one scene")
    return [random_or_scene(seed ^ i, form) for i in range(n)]


# -- cube stacks ----------------------------------------------------------------------------

CUBE_SPACING = 1.5
CUBE_JITTER = 0.2


def gen_cube_stack(n_cubes: int, seed: int = 0, columns: int | None = None, form=Form.MATRIX):
    """Unit cubes dropped into random columns of a ground grid.

    Returns ``(scene, on_top)`` where ``on_top`` lists ``(upper, lower)``
    entity-id pairs of cubes resting directly on one another.
    """
    if n_cubes < 2:
        raise ValueError("need at least two cubes")
    rng = np.random.default_rng(seed)
    if columns is None:
        side = int(np.ceil(np.sqrt(n_cubes / 4.0)))
        columns = side * side
    side = int(np.ceil(np.sqrt(columns)))
    scene = Scene(f"cube_stack_{n_cubes}", {"template": "cube_stack"})
    root = scene.add_entity("Ground", "Ground")
    tops = {}
    on_top = []
    for k in range(n_cubes):
        col = int(rng.integers(0, columns))
        cx, cy = divmod(col, side)
        x, y = np.array([cx, cy]) * CUBE_SPACING + rng.uniform(-CUBE_JITTER, CUBE_JITTER, 2)
        below = tops.get(col)
        z = 0.5 if below is None else below[1] + 1.0
        eid = scene.add_entity(f"cube{k}", "Cube", root)
        scene.add_component(eid, TRSComponent(from_qts([1.0, 0, 0, 0], [x, y, z], np.ones(3), form)))
        if below is not None:
            on_top.append((eid, below[0]))
        tops[col] = (eid, z)
    return scene, on_top


def on_top_pairs_bruteforce(centres: dict) -> list:
    """All ``(upper, lower)`` pairs of unit cubes in direct vertical contact."""
    ids = list(centres)
    out = []
    for i in ids:
        for j in ids:
            if i == j:
                continue
            a, b = centres[i], centres[j]
            if abs(a[2] - (b[2] + 1.0)) < 1e-6 and abs(a[0] - b[0]) < 1.0 and abs(a[1] - b[1]) < 1.0:
                out.append((i, j))
    return out


def cube_features(scene: Scene, form=Form.MATRIX):
    """Feature rows (world pose of each cube in ``form``) and the entity id of each row."""
    ids = [e for e in scene.iter_depth_first() if scene.entities[e].category == "Cube"]
    rows = []
    for e in ids:
        local = scene.get(e, "trs").repr
        rows.append(trs_feature(convert(local, form)))
    return np.array(rows), ids
