import numpy as np
import pytest

from oracles import homogeneous, random_rigid, rodrigues
from unisg.scenegraph import (
    MESH_FEATURE_SIZE,
    ActionDataComponent,
    InfoComponent,
    MeshFeatureComponent,
    Scene,
    SceneError,
    TRSComponent,
    insert_action_check,
    mesh_feature,
    sample_primitive,
)
from unisg.xform import ALL_FORMS, Form, TransformRepr, convert


def trs(t=(0, 0, 0), rot=None, scale=(1, 1, 1), form=Form.MATRIX):
    x = TransformRepr.from_matrix(homogeneous(rot, t, scale))
    return TRSComponent(convert(x, form))


def chain():
    s = Scene("chain")
    root = s.add_entity("root")
    a = s.add_entity("a", parent=root)
    b = s.add_entity("b", parent=a)
    s.add_component(root, trs())
    s.add_component(a, trs((1, 0, 0)))
    s.add_component(b, trs((0, 1, 0)))
    return s, root, a, b


# -- mutation ----------------------------------------------------------------------------

def test_add_root_then_child():
    s = Scene()
    r = s.add_entity("r")
    c = s.add_entity("c", parent=r)
    assert s.entities[c].parent == r and s.children(r) == [c]
    assert s.root == r and len(s) == 2
    with pytest.raises(SceneError):
        s.add_entity("second root")
    with pytest.raises(SceneError):
        s.add_entity("orphan", parent=99)
    with pytest.raises(SceneError):
        s.add_entity("dup", parent=r, eid=c)


def test_reparent_rules():
    s, root, a, b = chain()
    with pytest.raises(SceneError, match="cycle"):
        s.reparent(a, b)
    with pytest.raises(SceneError, match="cycle"):
        s.reparent(a, a)
    with pytest.raises(SceneError):
        s.reparent(root, a)
    s.reparent(b, root)
    assert s.children(root) == [a, b] and s.children(a) == []


def test_component_uniqueness_and_ownership():
    s, root, a, _ = chain()
    with pytest.raises(SceneError, match="already has a trs"):
        s.add_component(a, trs())
    with pytest.raises(SceneError):
        s.add_component(42, trs())
    with pytest.raises(SceneError):
        s.remove_component(a, "mesh")
    assert isinstance(s.remove_component(a, "trs"), TRSComponent)
    assert s.get(a, "trs") is None
    with pytest.raises(SceneError):
        s.add_component(a, ActionDataComponent("insert", np.zeros(6), [a, 77]))


def test_remove_subtree():
    s, root, a, b = chain()
    s.remove_entity(a)
    assert a not in s and b not in s and s.children(root) == []
    s.remove_entity(root)
    assert s.root is None and list(s.iter_depth_first()) == []


def test_action_layout_validation():
    with pytest.raises(SceneError, match="params"):
        ActionDataComponent("insert", np.zeros(5), [0, 1])
    with pytest.raises(SceneError, match="refs"):
        ActionDataComponent("insert", np.zeros(6), [0])
    with pytest.raises(SceneError, match="unknown action"):
        ActionDataComponent("weld", np.zeros(6), [0, 1])


def test_mesh_component_length():
    assert MeshFeatureComponent().feature.size == MESH_FEATURE_SIZE
    with pytest.raises(SceneError):
        MeshFeatureComponent(np.zeros(10))


# -- info census ---------------------------------------------------------------------------

def test_info_is_lazy():
    s = Scene()
    r = s.add_entity("r")
    s.add_component(r, InfoComponent())
    s.add_component(r, trs())
    c = s.add_entity("c", parent=r)
    raw = s.components[r]["info"]
    assert raw.stale
    info = s.get(r, "info")
    assert not info.stale
    assert info.child_type_counts == {"entity": 1, "trs": 1, "mesh": 0, "action": 0}
    s.remove_entity(c)
    assert s.components[r]["info"].stale
    assert s.get(r, "info").child_type_counts["entity"] == 0


def brute_census(parent_of, comps, eid):
    counts = {"entity": sum(1 for p in parent_of.values() if p == eid), "trs": 0, "mesh": 0, "action": 0}
    for kind in comps[eid]:
        if kind in counts:
            counts[kind] += 1
    return counts


def test_mutation_fuzz_against_set_oracle(rng):
    # oracle keeps its own parent map and component sets
    for trial in range(20):
        s = Scene()
        root = s.add_entity("root")
        parent_of = {root: None}
        comps = {root: set()}
        for step in range(150):
            op = rng.integers(0, 5)
            ids = list(parent_of)
            pick = int(rng.choice(ids))
            if op == 0 or len(ids) < 3:
                eid = s.add_entity(f"n{step}", parent=pick)
                parent_of[eid] = pick
                comps[eid] = set()
            elif op == 1:
                kind = ["info", "trs", "mesh"][rng.integers(0, 3)]
                comp = {"info": InfoComponent, "trs": TRSComponent, "mesh": MeshFeatureComponent}[kind]()
                if kind in comps[pick]:
                    with pytest.raises(SceneError):
                        s.add_component(pick, comp)
                else:
                    s.add_component(pick, comp)
                    comps[pick].add(kind)
            elif op == 2 and comps[pick]:
                kind = sorted(comps[pick])[0]
                s.remove_component(pick, kind)
                comps[pick].discard(kind)
            elif op == 3:
                target = int(rng.choice(ids))
                # ancestor check straight from the oracle map
                node, cyc = target, False
                while node is not None:
                    cyc |= node == pick
                    node = parent_of[node]
                if pick == root or cyc:
                    with pytest.raises(SceneError):
                        s.reparent(pick, target)
                else:
                    s.reparent(pick, target)
                    parent_of[pick] = target
            elif op == 4 and pick != root:
                doomed = {pick}
                grew = True
                while grew:
                    more = {e for e, p in parent_of.items() if p in doomed} - doomed
                    grew = bool(more)
                    doomed |= more
                s.remove_entity(pick)
                for e in doomed:
                    del parent_of[e], comps[e]
        assert set(s.entities) == set(parent_of)
        assert {e: s.entities[e].parent for e in s.entities} == parent_of
        assert sorted(s.iter_depth_first()) == sorted(parent_of)
        for eid in parent_of:
            assert set(s.components[eid]) == comps[eid]
            info = s.get(eid, "info")
            if info is not None:
                assert info.child_type_counts == brute_census(parent_of, comps, eid)


# -- transforms ----------------------------------------------------------------------------

def test_world_transform_chain():
    s, root, a, b = chain()
    np.testing.assert_array_equal(s.world_transform(b)[:3, 3], [1, 1, 0])
    bare = Scene()
    e = bare.add_entity("e")
    assert np.array_equal(bare.world_transform(e), np.eye(4))


def test_mixed_forms_along_path(rng):
    s, root, a, b = chain()
    ref = s.world_transform(b)
    s.components[a]["trs"].repr = convert(s.components[a]["trs"].repr, Form.PGA_MOTOR)
    np.testing.assert_allclose(s.world_transform(b), ref, atol=1e-9)


def random_scene(rng, n=20):
    s = Scene("random")
    ids = [s.add_entity("root")]
    s.add_component(ids[0], TRSComponent(TransformRepr.from_matrix(random_rigid(rng))))
    for k in range(1, n):
        eid = s.add_entity(f"e{k}", parent=int(rng.choice(ids)))
        ids.append(eid)
        if rng.random() < 0.8:
            m = random_rigid(rng) @ homogeneous(scale=[rng.uniform(0.5, 2)] * 3)
            s.add_component(eid, TRSComponent(TransformRepr.from_matrix(m)))
    return s


def test_world_transform_form_invariant(rng):
    for _ in range(20):
        s = random_scene(rng)
        ref = {e: s.world_transform(e) for e in s.entities}
        for form in ALL_FORMS:
            t = s.convert_all(form)
            for e in s.entities:
                np.testing.assert_allclose(t.world_transform(e), ref[e], atol=1e-9)


def test_convert_all_is_a_copy():
    s, root, a, b = chain()
    t = s.convert_all(Form.CGA_MOTOR)
    assert s.get(a, "trs").repr.form is Form.MATRIX
    assert t.get(a, "trs").repr.form is Form.CGA_MOTOR


# -- actions ----------------------------------------------------------------------------------

def test_insert_check_examples():
    lo, hi = [-1, -1, -1], [1, 1, 1]
    assert insert_action_check([0, 0, 0], lo, hi)
    assert not insert_action_check([2, 0, 0], lo, hi)
    assert insert_action_check([1, 0, 0], lo, hi)
    with pytest.raises(ValueError):
        insert_action_check([0, 0, 0], hi, lo)


def surgery():
    s = Scene("surgery")
    room = s.add_entity("room")
    knee = s.add_entity("knee", parent=room)
    tool = s.add_entity("tool", parent=room)
    s.add_component(knee, trs((0, 0, 1), rodrigues(np.pi / 2, [0, 0, 1])))
    s.add_component(tool, trs((0.05, 0, 1)))
    return s, room, knee, tool


def test_action_system():
    s, room, knee, tool = surgery()
    assert s.run_action_system("insert") == []
    s.add_component(tool, ActionDataComponent("insert", [-0.1] * 3 + [0.1] * 3, [tool, knee]))
    assert s.run_action_system("insert") == [(tool, True, None)]
    assert s.get(tool, "action").satisfied
    assert s.run_action_system("insert") == [(tool, True, None)]
    with pytest.raises(SceneError):
        s.run_action_system("weld")


def test_bounds_are_in_target_frame():
    s, room, knee, tool = surgery()
    # tool offset by +x in world sits at -y in the knee's rotated frame
    s.add_component(tool, ActionDataComponent("insert", [-0.1, -0.1, -0.1, 0.1, 0.0, 0.1], [tool, knee]))
    assert s.run_action_system("insert")[0].satisfied
    s.get(tool, "trs").repr = TransformRepr.from_matrix(homogeneous(t=(-0.05, 0, 1)))
    assert not s.run_action_system("insert")[0].satisfied


def test_actions_in_order_with_dangling_ref():
    s, room, knee, tool = surgery()
    far = s.add_entity("far", parent=room)
    s.add_component(far, trs((5, 0, 0)))
    s.add_component(tool, ActionDataComponent("insert", [-0.1] * 3 + [0.1] * 3, [tool, knee]))
    s.add_component(far, ActionDataComponent("insert", [-0.1] * 3 + [0.1] * 3, [far, knee]))
    spare = s.add_entity("spare", parent=room)
    s.add_component(spare, ActionDataComponent("insert", np.zeros(6), [spare, far]))
    s.components[spare]["action"].refs = [spare, 999]
    res = s.run_action_system("insert")
    assert [(r.entity_id, r.satisfied) for r in res] == [(tool, True), (far, False), (spare, False)]
    assert res[2].error is not None and res[0].error is None
    assert [r.entity_id for r in s.run_action_system("insert", root=far)] == [far]


# -- mesh descriptor --------------------------------------------------------------------------

def test_mesh_single_point():
    f = mesh_feature([[0, 0, 0]])
    assert f.size == MESH_FEATURE_SIZE and f[0] == 1.0 and f[1:].sum() == 0
    with pytest.raises(ValueError):
        mesh_feature(np.zeros((0, 3)))


def test_mesh_translation_invariant_and_deterministic(rng):
    pts = sample_primitive("torus", 400, seed=3)
    f = mesh_feature(pts)
    assert np.array_equal(f, mesh_feature(pts.copy()))
    # a power-of-two shift keeps centering exact enough to land in the same bins
    assert np.array_equal(f, mesh_feature(pts + np.array([4.0, -8.0, 2.0])))
    assert abs(np.linalg.norm(f) - 1) < 1e-12


def test_mesh_separates_primitives():
    box = mesh_feature(sample_primitive("box", 2048, seed=0))
    sphere = mesh_feature(sample_primitive("sphere", 2048, seed=0))
    assert float(box @ sphere) < 0.99
    with pytest.raises(ValueError):
        sample_primitive("teapot")


# -- structural comparison -------------------------------------------------------------------

def test_structural_equality_ignores_ids():
    a, *_ = chain()
    b = Scene("chain")
    r = b.add_entity("root", eid=10)
    x = b.add_entity("a", parent=r, eid=3)
    y = b.add_entity("b", parent=x, eid=7)
    b.add_component(r, trs())
    b.add_component(x, trs((1, 0, 0)))
    b.add_component(y, trs((0, 1, 0)))
    assert a.structurally_equal(b)
    b.get(y, "trs").repr = TransformRepr.from_matrix(homogeneous(t=(0, 1, 1e-300)))
    assert not a.structurally_equal(b)
    assert a.copy().structurally_equal(a)
