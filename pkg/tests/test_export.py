import numpy as np
import pytest

from oracles import homogeneous, random_rigid
from scenegen import random_scene
from unisg.export import (
    KIND_WIDTH,
    Vocabulary,
    export_tensors,
    pool_mesh_feature,
    pose_rows,
    trs_feature,
    trs_width,
)
from unisg.scenegraph import MeshFeatureComponent, Scene, TRSComponent, mesh_feature, sample_primitive
from unisg.xform import ALL_FORMS, Form, TransformRepr, convert


def test_native_widths():
    assert [trs_width(f) for f in ALL_FORMS] == [16, 10, 10, 11, 19, 35]
    x = TransformRepr.from_matrix(random_rigid(np.random.default_rng(0)))
    for f in ALL_FORMS:
        assert trs_feature(convert(x, f)).size == trs_width(f)


def test_identity_features():
    assert np.array_equal(trs_feature(TransformRepr.identity()), np.eye(4).ravel())
    pga = trs_feature(TransformRepr.identity(Form.PGA_MOTOR))
    assert pga.size == 19 and pga[0] == 1 and not pga[1:16].any() and np.array_equal(pga[16:], [1, 1, 1])


def test_matrix_feature_folds_scale():
    m = homogeneous(scale=(2, 2, 2))
    assert np.array_equal(trs_feature(TransformRepr.from_matrix(m)), m.ravel())


def single():
    s = Scene()
    r = s.add_entity("r", "Room")
    s.add_component(r, TRSComponent())
    return s


def test_single_entity_export():
    g = export_tensors(single())
    assert g.N == 2 and g.F == KIND_WIDTH + 16
    assert g.node_kinds == ["entity", "trs"]
    assert np.array_equal(g.A, [[0, 1], [1, 0]])
    assert np.array_equal(g.X[0, :KIND_WIDTH], [1, 0, 0, 0, 0])
    assert np.array_equal(g.X[1, :KIND_WIDTH], [0, 0, 1, 0, 0])
    vocab = Vocabulary.from_scenes([single()])
    assert vocab.names[g.categories[0]] == "Room" and vocab.names[g.categories[1]] == "<trs>"


def test_empty_scene_export():
    g = export_tensors(Scene())
    assert g.N == 0 and g.A.shape == (0, 0)


def test_deterministic(rng):
    s = random_scene(rng, mesh_prob=0.3, rigid_only=True)
    a, b = export_tensors(s, Form.DUAL_QUAT), export_tensors(s.copy(), Form.DUAL_QUAT)
    assert a.X.tobytes() == b.X.tobytes() and a.A.tobytes() == b.A.tobytes()
    assert a.categories.tobytes() == b.categories.tobytes()


def test_structure_is_form_invariant(rng):
    for _ in range(30):
        s = random_scene(rng, rigid_only=True, mesh_prob=0.1)
        vocab = Vocabulary.from_scenes([s])
        ref = export_tensors(s, Form.MATRIX, vocab)
        for form in ALL_FORMS[1:]:
            g = export_tensors(s, form, vocab)
            assert np.array_equal(g.A, ref.A)
            assert g.node_kinds == ref.node_kinds
            assert np.array_equal(g.categories, ref.categories)


def test_adjacency_symmetric_zero_diagonal(rng):
    for _ in range(30):
        g = export_tensors(random_scene(rng, rigid_only=True), Form.CGA_MOTOR)
        assert np.array_equal(g.A, g.A.T) and not np.diag(g.A).any()
        assert set(np.unique(g.A)) <= {0.0, 1.0}
        # a tree: one edge per node except the first
        assert g.A.sum() == 2 * (g.N - 1)


def test_rows_padded_beyond_native_width(rng):
    s = random_scene(rng, mesh_prob=0.0, rigid_only=True)
    g = export_tensors(s, Form.QUAT_T)
    for i, kind in enumerate(g.node_kinds):
        native = {"entity": 0, "info": 4, "trs": 10, "action": 6}[kind]
        assert not g.X[i, KIND_WIDTH + native:].any()


def labelled_scene(order, rng_seed=0):
    """Same tree built with children inserted in ``order``."""
    rng = np.random.default_rng(rng_seed)
    poses = {n: random_rigid(rng) for n in "abcd"}
    s = Scene("perm")
    r = s.add_entity("root", "Room")
    for name in order:
        e = s.add_entity(name, name.upper(), r)
        s.add_component(e, TRSComponent(TransformRepr.from_matrix(poses[name])))
        if name in "bd":
            leaf = s.add_entity(name + "_leaf", "Leaf", e)
            s.add_component(leaf, MeshFeatureComponent(mesh_feature(sample_primitive("cone", 64, seed=1))))
    return s


def node_keys(scene, g):
    return [(scene.entities[e].name, k) for e, k in zip(g.entity_ids, g.node_kinds)]


def test_child_order_permutes_consistently():
    base = labelled_scene("abcd")
    vocab = Vocabulary(["Room", "A", "B", "C", "D", "Leaf"])
    g0 = export_tensors(base, Form.PGA_MOTOR, vocab, mesh_width=64)
    k0 = node_keys(base, g0)
    for order in ("dcba", "bdac", "cabd"):
        s = labelled_scene(order)
        g = export_tensors(s, Form.PGA_MOTOR, vocab, mesh_width=64)
        k = node_keys(s, g)
        # relabelling oracle: perm[i] is where node i of the base export went
        perm = [k.index(key) for key in k0]
        assert np.array_equal(g.X[perm], g0.X)
        assert np.array_equal(g.A[np.ix_(perm, perm)], g0.A)
        assert np.array_equal(g.categories[perm], g0.categories)


def world_from_rows(scene, g, form):
    local = {e: x.matrix() for e, x in pose_rows(g, form).items()}
    out = {}
    for eid in scene.iter_depth_first():
        p = scene.entities[eid].parent
        m = local.get(eid, np.eye(4))
        out[eid] = m if p is None else out[p] @ m
    return out


def test_pose_reconstruction_from_rows(rng):
    for _ in range(20):
        s = random_scene(rng, rigid_only=True)
        ref = {e: s.world_transform(e) for e in s.entities}
        for form in ALL_FORMS:
            got = world_from_rows(s, export_tensors(s, form), form)
            for e in s.entities:
                np.testing.assert_allclose(got[e], ref[e], atol=1e-9)


def test_mesh_pooling():
    f = mesh_feature(sample_primitive("sphere", 500, seed=2))
    p = pool_mesh_feature(f, 64)
    assert p.size == 64 and abs(np.linalg.norm(p) - 1) < 1e-12
    assert np.array_equal(pool_mesh_feature(f, None), f)
    with pytest.raises(ValueError):
        pool_mesh_feature(f, 100)
    s = Scene()
    e = s.add_entity("e")
    s.add_component(e, MeshFeatureComponent(f))
    assert export_tensors(s).F == KIND_WIDTH + 1024
    assert export_tensors(s, mesh_width=64).F == KIND_WIDTH + 64


def test_vocabulary():
    v = Vocabulary(["Knee", "Knee", "Table"])
    assert v.names[:4] == ["<info>", "<trs>", "<mesh>", "<action>"]
    assert len(v) == 6 and v.id("Table") == 5
    with pytest.raises(KeyError):
        v.id("Sofa")
    with pytest.raises(KeyError):
        export_tensors(single(), vocab=Vocabulary())


def test_dump(tmp_path, rng):
    s = random_scene(rng, rigid_only=True)
    vocab = Vocabulary.from_scenes([s])
    g = export_tensors(s, Form.DUAL_QUAT, vocab)
    g.dump(tmp_path, vocab)
    X = np.loadtxt(tmp_path / "X.csv", delimiter=",", ndmin=2)
    assert np.array_equal(X, g.X)
    nodes = (tmp_path / "nodes.csv").read_text().splitlines()
    assert nodes[0] == "id,kind,category" and len(nodes) == g.N + 1
    edges = (tmp_path / "edges.csv").read_text().splitlines()
    assert len(edges) == g.N  # header plus N - 1 tree edges
