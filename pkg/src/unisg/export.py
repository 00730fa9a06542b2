"""Scene -> dense graph tensors for the neural engine.

Every entity and every component becomes a node.  Nodes are ordered depth
first: an entity, then its components (info, trs, mesh, action), then its
child entities.  Each row of ``X`` is a 5-wide node-kind one-hot followed by
the node's native features, zero padded to a common width.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .scenegraph import COMPONENT_KINDS, Scene
from .xform import ARITY, Form, TransformRepr, convert

NODE_KINDS = ("entity",) + COMPONENT_KINDS
KIND_WIDTH = len(NODE_KINDS)
# pseudo-categories for component nodes, always the first vocabulary ids
COMPONENT_CATEGORIES = tuple(f"<{k}>" for k in COMPONENT_KINDS)


def trs_width(form) -> int:
    form = Form(form)
    return 16 if form is Form.MATRIX else ARITY[form] + 3


def trs_feature(x: TransformRepr) -> np.ndarray:
    """Flat feature of a transform in its own form.

    ``matrix`` is the 16 row-major entries with scale folded in; every other
    form is its payload followed by the 3 scale values.
    """
    if x.form is Form.MATRIX:
        return x.coeffs.copy()
    return np.concatenate([x.coeffs, x.scale])


def repr_from_feature(vec, form) -> TransformRepr:
    form = Form(form)
    vec = np.asarray(vec, dtype=float)[: trs_width(form)]
    if form is Form.MATRIX:
        return TransformRepr(form, vec)
    return TransformRepr(form, vec[:-3], vec[-3:])


def pool_mesh_feature(feature, width: int | None) -> np.ndarray:
    """Reduce a 1024 mesh descriptor to ``width`` bins by summing neighbours.

    Bins are octant-major, so pooling merges adjacent radial shells.
    """
    feature = np.asarray(feature, dtype=float)
    if width is None or width == feature.size:
        return feature.copy()
    if feature.size % width:
        raise ValueError(f"mesh width {width} must divide {feature.size}")
    pooled = feature.reshape(width, -1).sum(axis=1)
    n = np.linalg.norm(pooled)
    return pooled / n if n > 0 else pooled


@dataclass
class NodeLayout:
    nodes: list  # (entity id, kind)
    edges: list  # (src index, dst index, edge kind)


def node_order(scene: Scene) -> NodeLayout:
    nodes, edges = [], []
    index_of_entity = {}
    for eid in scene.iter_depth_first():
        ent = scene.entities[eid]
        i = len(nodes)
        index_of_entity[eid] = i
        nodes.append((eid, "entity"))
        if ent.parent is not None:
            edges.append((index_of_entity[ent.parent], i, "parent_child"))
        for kind in COMPONENT_KINDS:
            if scene.components[eid].get(kind) is not None:
                edges.append((i, len(nodes), "entity_component"))
                nodes.append((eid, kind))
    return NodeLayout(nodes, edges)


def native_features(scene: Scene, eid: int, kind: str, form=None, mesh_width=None) -> np.ndarray:
    if kind == "entity":
        return np.zeros(0)
    comp = scene.get(eid, kind)
    if kind == "info":
        return comp.vector()
    if kind == "trs":
        x = comp.repr if form is None else convert(comp.repr, form)
        return trs_feature(x)
    if kind == "mesh":
        return pool_mesh_feature(comp.feature, mesh_width)
    return comp.params.copy()


class Vocabulary:
    """Category name <-> id, with component pseudo-categories first."""

    def __init__(self, categories=()):
        self.names = list(COMPONENT_CATEGORIES)
        for c in categories:
            if c not in self.names:
                self.names.append(c)
        self.ids = {n: i for i, n in enumerate(self.names)}

    @classmethod
    def from_scenes(cls, scenes):
        cats = sorted({e.category for s in scenes for e in s.entities.values()})
        return cls(cats)

    def __len__(self):
        return len(self.names)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.names == other.names

    def id(self, name) -> int:
        try:
            return self.ids[name]
        except KeyError:
            raise KeyError(f"category {name!r} not in vocabulary") from None


@dataclass
class GraphTensors:
    X: np.ndarray
    A: np.ndarray
    node_kinds: list
    categories: np.ndarray
    graph_label: int | None = None
    entity_ids: list = field(default_factory=list)
    edges: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def F(self) -> int:
        return self.X.shape[1]

    def dump(self, directory, vocab: Vocabulary | None = None) -> None:
        """Write ``nodes.csv``, ``edges.csv`` and the dense ``X.csv`` block."""
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "nodes.csv"), "w", newline="\n") as fh:
            fh.write("id,kind,category\n")
            for i, (kind, cat) in enumerate(zip(self.node_kinds, self.categories)):
                name = vocab.names[cat] if vocab is not None else str(int(cat))
                fh.write(f"{i},{kind},{name}\n")
        with open(os.path.join(directory, "edges.csv"), "w", newline="\n") as fh:
            fh.write("src,dst,edge_kind\n")
            for s, d, k in self.edges:
                fh.write(f"{s},{d},{k}\n")
        np.savetxt(os.path.join(directory, "X.csv"), self.X, delimiter=",", fmt="%.17g")


def export_tensors(scene: Scene, form=Form.MATRIX, vocab: Vocabulary | None = None,
                   mesh_width: int | None = None, graph_label: int | None = None) -> GraphTensors:
    form = Form(form)
    vocab = vocab or Vocabulary.from_scenes([scene])
    scene.refresh_info()
    layout = node_order(scene)
    rows, kinds, cats, eids = [], [], [], []
    for eid, kind in layout.nodes:
        rows.append(native_features(scene, eid, kind, form, mesh_width))
        kinds.append(kind)
        cats.append(vocab.id(scene.entities[eid].category) if kind == "entity" else vocab.id(f"<{kind}>"))
        eids.append(eid)
    n = len(rows)
    width = KIND_WIDTH + max((r.size for r in rows), default=0)
    X = np.zeros((n, width))
    for i, (kind, r) in enumerate(zip(kinds, rows)):
        X[i, NODE_KINDS.index(kind)] = 1.0
        X[i, KIND_WIDTH:KIND_WIDTH + r.size] = r
    A = np.zeros((n, n))
    for s, d, _ in layout.edges:
        A[s, d] = A[d, s] = 1.0
    return GraphTensors(X, A, kinds, np.array(cats, dtype=int), graph_label, eids, layout.edges)


def pose_rows(g: GraphTensors, form) -> dict:
    """Entity id -> local TransformRepr, read back from the trs rows of ``X``."""
    out = {}
    for i, kind in enumerate(g.node_kinds):
        if kind == "trs":
            out[g.entity_ids[i]] = repr_from_feature(g.X[i, KIND_WIDTH:], form)
    return out
