"""Entity-component scenegraph with info, TRS, mesh and action components."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple

import numpy as np

from .xform import Form, TransformRepr

MESH_FEATURE_SIZE = 1024
COUNTED_KINDS = ("entity", "trs", "mesh", "action")
COMPONENT_KINDS = ("info", "trs", "mesh", "action")


class SceneError(ValueError):
    pass


@dataclass
class Entity:
    id: int
    name: str
    category: str = ""
    parent: int | None = None
    children: list[int] = field(default_factory=list)


@dataclass
class InfoComponent:
    """Census of the owner's children by node kind.

    Kept up to date lazily: the scene marks it stale on mutation and
    refreshes it before handing it out through :meth:`Scene.get`.
    """

    kind = "info"
    child_type_counts: dict = field(default_factory=lambda: dict.fromkeys(COUNTED_KINDS, 0))
    stale: bool = True

    def vector(self) -> np.ndarray:
        return np.array([self.child_type_counts[k] for k in COUNTED_KINDS], dtype=float)


@dataclass
class TRSComponent:
    kind = "trs"
    repr: TransformRepr = field(default_factory=TransformRepr.identity)


@dataclass
class MeshFeatureComponent:
    kind = "mesh"
    feature: np.ndarray = field(default_factory=lambda: np.zeros(MESH_FEATURE_SIZE))

    def __post_init__(self):
        self.feature = np.asarray(self.feature, dtype=float).reshape(-1)
        if self.feature.size != MESH_FEATURE_SIZE:
            raise SceneError(f"mesh feature must have {MESH_FEATURE_SIZE} values, got {self.feature.size}")


@dataclass
class ActionDataComponent:
    kind = "action"
    action_type: str
    params: np.ndarray
    refs: list[int]
    satisfied: bool = False

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float).reshape(-1)
        self.refs = [int(r) for r in self.refs]
        layout = ACTION_REGISTRY.get(self.action_type)
        if layout is None:
            raise SceneError(f"unknown action type {self.action_type!r}")
        if self.params.size != layout.n_params:
            raise SceneError(
                f"{self.action_type!r} action needs {layout.n_params} params, got {self.params.size}"
            )
        if len(self.refs) != layout.n_refs:
            raise SceneError(f"{self.action_type!r} action needs {layout.n_refs} refs, got {len(self.refs)}")


# -- action systems ------------------------------------------------------------

def insert_action_check(tool_world_pos, lo, hi) -> bool:
    """Closed axis-aligned box containment."""
    pos, lo, hi = (np.asarray(v, dtype=float) for v in (tool_world_pos, lo, hi))
    if np.any(lo > hi):
        raise ValueError(f"inverted bounds: min {lo.tolist()} > max {hi.tolist()}")
    return bool(np.all(lo <= pos) and np.all(pos <= hi))


def _insert_condition(scene: "Scene", action: ActionDataComponent) -> bool:
    # refs = (tool, target); bounds live in the target's local frame
    tool, target = action.refs
    pos = scene.world_transform(tool)[:3, 3]
    local = np.linalg.solve(scene.world_transform(target), np.append(pos, 1.0))[:3]
    return insert_action_check(local, action.params[:3], action.params[3:6])


@dataclass(frozen=True)
class ActionLayout:
    n_params: int
    n_refs: int
    condition: Callable[["Scene", ActionDataComponent], bool]


ACTION_REGISTRY: dict[str, ActionLayout] = {
    "insert": ActionLayout(6, 2, _insert_condition),
}


def register_action(action_type: str, n_params: int, n_refs: int, condition):
    ACTION_REGISTRY[action_type] = ActionLayout(n_params, n_refs, condition)


class ActionResult(NamedTuple):
    entity_id: int
    satisfied: bool
    error: str | None = None


def _bits(a):
    return (np.asarray(a, dtype=float) + 0.0).tobytes()  # folds -0.0 into 0.0


# -- the scene -----------------------------------------------------------------

def _meta_value(v):
    # the text format stores every number as a float
    if isinstance(v, (int, float, np.number)) and not isinstance(v, bool):
        return float(v) + 0.0
    return v


class Scene:
    """A rooted tree of entities, each owning at most one component per kind.

    Mutations happen in place.  ``Scene()`` has no entities; the first
    entity added without a parent becomes the root.
    """

    def __init__(self, name: str = "scene", metadata: dict | None = None):
        self.name = name
        self.metadata: dict = dict(metadata or {})
        self.entities: dict[int, Entity] = {}
        self.components: dict[int, dict[str, object]] = {}
        self.root: int | None = None
        self._next_id = 0

    def __repr__(self):
        return f"Scene({self.name!r}, {len(self.entities)} entities)"

    def __len__(self):
        return len(self.entities)

    def __contains__(self, eid):
        return eid in self.entities

    def copy(self) -> "Scene":
        return copy.deepcopy(self)

    # -- mutation ---------------------------------------------------------------
    def _entity(self, eid) -> Entity:
        try:
            return self.entities[eid]
        except KeyError:
            raise SceneError(f"no entity with id {eid}") from None

    def _touch(self, eid):
        if eid is None:
            return
        info = self.components.get(eid, {}).get("info")
        if info is not None:
            info.stale = True

    def add_entity(self, name: str, category: str = "", parent: int | None = None, eid: int | None = None) -> int:
        if parent is None:
            if self.root is not None:
                raise SceneError("scene already has a root; give a parent")
        else:
            self._entity(parent)
        if eid is None:
            eid = self._next_id
        elif eid in self.entities:
            raise SceneError(f"duplicate entity id {eid}")
        self._next_id = max(self._next_id, eid + 1)
        self.entities[eid] = Entity(eid, name, category, parent)
        self.components[eid] = {}
        if parent is None:
            self.root = eid
        else:
            self.entities[parent].children.append(eid)
            self._touch(parent)
        return eid

    def add_component(self, owner: int, component) -> None:
        self._entity(owner)
        kind = component.kind
        slots = self.components[owner]
        if kind in slots:
            raise SceneError(f"entity {owner} already has a {kind} component")
        if kind == "action":
            for ref in component.refs:
                self._entity(ref)
        slots[kind] = component
        if kind == "info":
            component.stale = True
        self._touch(owner)

    def remove_component(self, owner: int, kind: str):
        self._entity(owner)
        try:
            comp = self.components[owner].pop(kind)
        except KeyError:
            raise SceneError(f"entity {owner} has no {kind} component") from None
        self._touch(owner)
        return comp

    def is_ancestor(self, a: int, b: int) -> bool:
        """True if ``a`` is ``b`` or lies on the path from ``b`` to the root."""
        while b is not None:
            if a == b:
                return True
            b = self.entities[b].parent
        return False

    def reparent(self, eid: int, new_parent: int) -> None:
        ent = self._entity(eid)
        self._entity(new_parent)
        if ent.parent is None:
            raise SceneError("cannot reparent the root")
        if self.is_ancestor(eid, new_parent):
            raise SceneError(f"reparenting {eid} under {new_parent} would create a cycle")
        old = ent.parent
        self.entities[old].children.remove(eid)
        self.entities[new_parent].children.append(eid)
        ent.parent = new_parent
        self._touch(old)
        self._touch(new_parent)

    def remove_entity(self, eid: int) -> None:
        """Remove an entity with its whole subtree."""
        ent = self._entity(eid)
        for sub in list(self.iter_depth_first(eid)):
            del self.entities[sub]
            del self.components[sub]
        if ent.parent is None:
            self.root = None
        else:
            self.entities[ent.parent].children.remove(eid)
            self._touch(ent.parent)

    # -- reading ----------------------------------------------------------------
    def children(self, eid: int) -> list[int]:
        return list(self._entity(eid).children)

    def get(self, eid: int, kind: str):
        self._entity(eid)
        comp = self.components[eid].get(kind)
        if kind == "info" and comp is not None and comp.stale:
            self._refresh(eid, comp)
        return comp

    def census(self, eid: int) -> dict:
        counts = dict.fromkeys(COUNTED_KINDS, 0)
        counts["entity"] = len(self.entities[eid].children)
        for kind in self.components[eid]:
            if kind in counts:
                counts[kind] += 1
        return counts

    def _refresh(self, eid, info: InfoComponent):
        info.child_type_counts = self.census(eid)
        info.stale = False

    def refresh_info(self) -> None:
        for eid, slots in self.components.items():
            info = slots.get("info")
            if info is not None and info.stale:
                self._refresh(eid, info)

    def iter_depth_first(self, start: int | None = None) -> Iterator[int]:
        """Entity ids in document order (pre-order, children in insertion order)."""
        start = self.root if start is None else start
        if start is None:
            return
        stack = [start]
        while stack:
            eid = stack.pop()
            yield eid
            stack.extend(reversed(self.entities[eid].children))

    def path(self, eid: int) -> str:
        names = []
        while eid is not None:
            ent = self.entities[eid]
            names.append(ent.name)
            eid = ent.parent
        return "/" + "/".join(reversed(names))

    # -- systems ----------------------------------------------------------------
    def local_transform(self, eid: int) -> np.ndarray:
        trs = self.components[eid].get("trs")
        return np.eye(4) if trs is None else trs.repr.matrix()

    def world_transform(self, eid: int) -> np.ndarray:
        m = np.eye(4)
        node = self._entity(eid).id
        while node is not None:
            m = self.local_transform(node) @ m
            node = self.entities[node].parent
        return m

    def run_action_system(self, action_type: str, root: int | None = None) -> list[ActionResult]:
        if action_type not in ACTION_REGISTRY:
            raise SceneError(f"unknown action type {action_type!r}")
        condition = ACTION_REGISTRY[action_type].condition
        results = []
        for eid in self.iter_depth_first(root):
            action = self.components[eid].get("action")
            if action is None or action.action_type != action_type:
                continue
            missing = [r for r in action.refs if r not in self.entities]
            if missing:
                results.append(ActionResult(eid, False, f"unresolved refs {missing}"))
                continue
            action.satisfied = condition(self, action)
            results.append(ActionResult(eid, action.satisfied))
        return results

    def convert_all(self, form) -> "Scene":
        """Copy of the scene with every TRS component converted to ``form``."""
        out = self.copy()
        for slots in out.components.values():
            trs = slots.get("trs")
            if trs is not None:
                trs.repr = trs.repr.to(Form(form))
        return out

    # -- structural comparison --------------------------------------------------
    def canonical(self):
        """Nested tuples describing the scene independent of entity ids.

        Entities are numbered in document order and action refs are mapped to
        those numbers; float arrays are compared by their exact bits, except
        that -0.0 counts as 0.0.  Numeric metadata compares by value.
        """
        order = list(self.iter_depth_first())
        index = {eid: i for i, eid in enumerate(order)}
        rows = []
        for eid in order:
            ent = self.entities[eid]
            comps = []
            for kind in COMPONENT_KINDS:
                c = self.components[eid].get(kind)
                if c is None:
                    continue
                if kind == "info":
                    comps.append(("info",))
                elif kind == "trs":
                    comps.append(("trs", c.repr.form.value, _bits(c.repr.coeffs), _bits(c.repr.scale)))
                elif kind == "mesh":
                    comps.append(("mesh", _bits(c.feature)))
                else:
                    refs = tuple(index.get(r, ("dangling", r)) for r in c.refs)
                    comps.append(("action", c.action_type, _bits(c.params), refs, bool(c.satisfied)))
            parent = None if ent.parent is None else index[ent.parent]
            rows.append((ent.name, ent.category, parent, tuple(comps)))
        meta = tuple(sorted((k, repr(_meta_value(v))) for k, v in self.metadata.items()))
        return self.name, meta, tuple(rows)

    def structurally_equal(self, other: "Scene") -> bool:
        return self.canonical() == other.canonical()


# -- mesh descriptor -----------------------------------------------------------------

RADIAL_BINS = MESH_FEATURE_SIZE // 8


def mesh_feature(points) -> np.ndarray:
    """Fixed-length shape descriptor for a point cloud.

    Centers the cloud, scales it by its largest radius, and histograms the
    points over 8 octants x 128 radial shells, then L2-normalizes.  Stands in
    for a learned mesh encoder; translation and scale invariant.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("empty point cloud")
    pts = pts - pts.mean(axis=0)
    radius = np.linalg.norm(pts, axis=1)
    rmax = radius.max()
    # centering leaves ~1e-16 noise; treat that as a degenerate cloud
    if rmax <= 1e-12:
        radius = np.zeros_like(radius)
        pts = np.zeros_like(pts)
    else:
        radius = radius / rmax
    shell = np.minimum((radius * RADIAL_BINS).astype(int), RADIAL_BINS - 1)
    octant = (pts[:, 0] < 0) * 1 + (pts[:, 1] < 0) * 2 + (pts[:, 2] < 0) * 4
    hist = np.bincount(octant * RADIAL_BINS + shell, minlength=MESH_FEATURE_SIZE).astype(float)
    return hist / np.linalg.norm(hist)


def sample_primitive(kind: str, n: int = 512, seed: int = 0, size=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Surface samples of a simple primitive, scaled per axis by ``size``."""
    rng = np.random.default_rng(seed)
    size = np.asarray(size, dtype=float)
    if kind == "box":
        pts = rng.uniform(-0.5, 0.5, (n, 3))
        face = rng.integers(0, 3, n)
        pts[np.arange(n), face] = np.where(rng.random(n) < 0.5, -0.5, 0.5)
    elif kind == "sphere":
        pts = rng.normal(size=(n, 3))
        pts = 0.5 * pts / np.linalg.norm(pts, axis=1, keepdims=True)
    elif kind == "cylinder":
        theta = rng.uniform(0, 2 * np.pi, n)
        pts = np.stack([0.5 * np.cos(theta), 0.5 * np.sin(theta), rng.uniform(-0.5, 0.5, n)], axis=1)
    elif kind == "cone":
        theta = rng.uniform(0, 2 * np.pi, n)
        h = np.sqrt(rng.random(n))
        pts = np.stack([0.5 * h * np.cos(theta), 0.5 * h * np.sin(theta), 0.5 - h], axis=1)
    elif kind == "torus":
        u, v = rng.uniform(0, 2 * np.pi, (2, n))
        r = 0.35 + 0.15 * np.cos(v)
        pts = np.stack([r * np.cos(u), r * np.sin(u), 0.15 * np.sin(v)], axis=1)
    elif kind == "plane":
        pts = np.column_stack([rng.uniform(-0.5, 0.5, (n, 2)), np.zeros(n)])
    else:
        raise ValueError(f"unknown primitive {kind!r}")
    return pts * size
