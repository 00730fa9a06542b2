import numpy as np
import pytest

from oracles import homogeneous, rodrigues
from scenegen import random_scene
from unisg.scenegraph import (
    ActionDataComponent,
    InfoComponent,
    MeshFeatureComponent,
    Scene,
    TRSComponent,
)
from unisg.sceneio import (
    SceneDocument,
    SceneParseError,
    export_flat,
    format_number,
    load,
    parse,
    save,
    serialize,
    tokenize,
)
from unisg.xform import Form, InvalidTransform, TransformRepr, convert

CORRUPTION_CHARS = '{}[]=,"#\\ \n0123456789.-eaxZ'


def test_minimal_document():
    doc = parse('unisg 1 scene "s" { entity "root" { } }')
    s = doc.scene
    assert doc.format_version == 1 and s.name == "s"
    assert len(s) == 1 and s.entities[s.root].name == "root"
    assert s.entities[s.root].category == ""


def test_empty_scene_is_canonical():
    assert serialize(Scene()) == 'unisg 1\nscene "scene" {\n}\n'
    assert len(parse(serialize(Scene())).scene) == 0


def test_pga_payload_round_trip():
    s = Scene("pga")
    r = s.add_entity("root")
    x = convert(TransformRepr.from_matrix(homogeneous(rodrigues(0.4, [1, 1, 0]), (1, 2, 3))), Form.PGA_MOTOR)
    s.add_component(r, TRSComponent(x))
    text = serialize(s)
    assert 'form = "pga_motor"' in text
    back = parse(text).scene.get(0, "trs").repr
    assert back.form is Form.PGA_MOTOR
    assert np.array_equal(back.coeffs, x.coeffs) and np.array_equal(back.scale, [1, 1, 1])


def test_comments_and_whitespace():
    text = '''# header
    unisg 1   # version
    scene "s" {
      label = 1
      entity "r" { category = "Room"   # trailing
        info { }
      }
    }'''
    s = parse(text).scene
    assert s.metadata == {"label": 1.0}
    assert s.entities[0].category == "Room"
    assert s.get(0, "info").child_type_counts["entity"] == 0


def test_numbers():
    assert format_number(-0.0) == "0"
    assert format_number(2.0) == "2"
    assert format_number(0.1) == "0.1"
    assert format_number(1e-300) == "1e-300"
    with pytest.raises(ValueError):
        format_number(float("nan"))
    for x in (np.pi, -1 / 3, 1e22, 5e-324, np.nextafter(1.0, 2.0)):
        assert float(format_number(x)) == x


def test_negative_zero_serializes_as_zero():
    s = Scene()
    r = s.add_entity("r")
    s.add_component(r, TRSComponent(TransformRepr(Form.QUAT_T, [1, -0.0, 0, 0, -0.0, 0, 0])))
    text = serialize(s)
    assert "-0" not in text
    assert serialize(parse(text)) == text


def test_string_escapes():
    s = Scene('a "quoted" \\ name')
    s.add_entity('tab\there', "ünï")
    text = serialize(s)
    back = parse(text).scene
    assert back.name == s.name and back.entities[0].name == "tab\there"
    with pytest.raises(ValueError):
        serialize(Scene("two\nlines"))


def test_action_refs_are_document_indices():
    s = Scene()
    r = s.add_entity("room", eid=50)
    knee = s.add_entity("knee", parent=r, eid=7)
    tool = s.add_entity("tool", parent=r, eid=3)
    s.add_component(tool, ActionDataComponent("insert", [-1, -1, -1, 1, 1, 1], [tool, knee], True))
    text = serialize(s)
    assert "refs = [2, 1]" in text and "satisfied = 1" in text
    back = parse(text).scene
    assert back.get(2, "action").refs == [2, 1] and back.get(2, "action").satisfied
    assert back.structurally_equal(s)


def test_forward_refs_resolve():
    text = '''unisg 1 scene "s" { entity "a" {
      action { type = "insert" params = [0, 0, 0, 1, 1, 1] refs = [0, 1] }
      entity "b" { } } }'''
    assert parse(text).scene.get(0, "action").refs == [0, 1]


def err(text):
    with pytest.raises(SceneParseError) as info:
        parse(text)
    return info.value


# (text, anchor the error must point at, k-th occurrence of the anchor, message fragment)
ERROR_CASES = [
    ('unisg 1 scene "s" { entity "r" { }', None, 0, "end of input"),
    ('unisg 2 scene "s" { }', "2", 0, "version"),
    ('unisg 1 scene "s" {\n entity "r" {\n  trs { form = "euler" coeffs = [1] scale = [1, 1, 1] }\n }\n}',
     '"euler"', 0, "euler"),
    ('unisg 1 scene "s" { entity "r" { info { } info { } } }', "info", 1, "duplicate"),
    ('unisg 1 scene "s" {\n entity "r" {\n  trs { form = "quat_t" coeffs = [1, 0, 0] scale = [1, 1, 1] }\n }\n}',
     "[1, 0, 0]", 0, "7"),
    ('unisg 1 scene "s" { entity "r" { mesh { feature = [1, 2] } } }', "[1, 2]", 0, "1024"),
    ('unisg 1 scene "s" { entity "r" { } entity "q" { } }', "entity", 1, "'}'"),
    ('unisg 1 scene "s" { entity "r" { @ } }', "@", 0, "character"),
    ('unisg 1 scene "s" { entity "r { } }', '"r', 0, "unterminated"),
    ('unisg 1 scene "s" { entity "r" { action { type = "insert" params = [0, 0, 0, 1, 1, 1] refs = [0, 4] } } }',
     "[0, 4]", 0, "refs"),
    ('unisg 1 scene "s" { entity "r" { trs { form = "matrix" } } }', "}", 0, "coeffs"),
    ('unisg 1 scene "s" { entity "r" { trs { colour = 1 } } }', "colour", 0, "colour"),
    ('unisg 1 scene "s" { category = "x" }', "category", 0, "entity header"),
]


def anchor_position(text, anchor, k):
    if anchor is None:
        lines = text.split("\n")
        return len(lines), len(lines[-1]) + 1
    i = -1
    for _ in range(k + 1):
        i = text.index(anchor, i + 1)
    line = text.count("\n", 0, i) + 1
    return line, i - (text.rfind("\n", 0, i) + 1) + 1


@pytest.mark.parametrize("text, anchor, k, fragment", ERROR_CASES)
def test_positioned_errors(text, anchor, k, fragment):
    e = err(text)
    assert (e.line, e.col) == anchor_position(text, anchor, k), str(e)
    assert fragment in str(e)


def test_error_names_expected_tokens():
    e = err('unisg 1 scene { }')
    assert e.expected == ("string",)
    assert str(e).startswith("1:15:")


def test_unbalanced_brace_in_canonical_text():
    text = serialize(random_scene(np.random.default_rng(3), 8))
    lines = text.split("\n")
    k = next(i for i, ln in enumerate(lines) if ln.strip() == "}" and i > 3)
    broken = "\n".join(lines[:k] + lines[k + 1:])
    e = err(broken)
    assert abs(e.line - (k + 1)) <= 1
    assert "parser stopped at" in str(e) and e.expected == ("'}'",)


def test_parse_checks_shape_not_content():
    # a non-unit quaternion is well-formed text; unisg validate reports it
    text = 'unisg 1 scene "s" { entity "r" { trs { form = "quat_t" coeffs = [2, 0, 0, 0, 0, 0, 0] scale = [1, 1, 1] } } }'
    x = parse(text).scene.get(0, "trs").repr
    with pytest.raises(InvalidTransform):
        x.validate()


def test_tokenizer_positions():
    toks = tokenize('a = [1,-2.5e3]\n  "x"')
    assert [(t.kind, t.line, t.col) for t in toks] == [
        ("IDENT", 1, 1), ("EQ", 1, 3), ("LBRACK", 1, 5), ("NUMBER", 1, 6), ("COMMA", 1, 7),
        ("NUMBER", 1, 8), ("RBRACK", 1, 14), ("STRING", 2, 3), ("EOF", 2, 6),
    ]


def test_round_trip_and_idempotence(rng):
    for _ in range(200):
        s = random_scene(rng, mesh_prob=0.02)
        text = serialize(s)
        back = parse(text).scene
        assert back.structurally_equal(s)
        assert serialize(back) == text


def test_serializer_rejects_reserved_keys():
    s = Scene()
    s.metadata["category"] = "x"
    with pytest.raises(ValueError):
        serialize(s)
    s.metadata = {"bad key": 1}
    with pytest.raises(ValueError):
        serialize(s)


def test_save_and_load(tmp_path, rng):
    s = random_scene(rng)
    path = tmp_path / "a.unisg"
    save(SceneDocument(s), path)
    assert load(path).scene.structurally_equal(s)
    assert path.read_bytes() == serialize(s).encode("utf-8")


def corruptions(text, rng, n):
    for _ in range(n):
        pos = int(rng.integers(0, len(text)))
        op = int(rng.integers(0, 3))
        ch = CORRUPTION_CHARS[rng.integers(0, len(CORRUPTION_CHARS))]
        inserted = "" if op == 1 else ch
        cut = pos + 1 if op != 2 else pos
        yield pos, inserted, text[:pos] + inserted + text[cut:]


def corruption_misses(rng, n_docs, per_doc):
    """Corruptions whose reported error line is more than one line away from
    the lines the corruption touches (an inserted newline touches two)."""
    misses, checked = [], 0
    for _ in range(n_docs):
        text = serialize(random_scene(rng, 6, mesh_prob=0.0))
        for pos, inserted, bad in corruptions(text, rng, per_doc):
            lo = bad.count("\n", 0, pos) + 1
            hi = lo + inserted.count("\n")
            checked += 1
            try:
                parse(bad)
            except SceneParseError as e:
                if not lo - 1 <= e.line <= hi + 1:
                    misses.append((bad, lo, str(e)))
    return misses, checked


def test_corruption_fuzz(rng):
    misses, checked = corruption_misses(rng, 30, 100)
    assert checked == 3000 and not misses, misses[:3]


# -- flat export -----------------------------------------------------------------------

def test_flat_single_entity():
    s = Scene()
    r = s.add_entity("r", "Room")
    s.add_component(r, TRSComponent())
    flat = export_flat(s)
    assert flat.nodes == [(0, "entity", "Room"), (1, "trs", "Room")]
    assert flat.edges == [(0, 1, "entity_component")]
    assert len(flat.features) == 1 and flat.features[0][1].size == 16


def test_flat_census_matches_info(rng):
    for _ in range(20):
        s = random_scene(rng, mesh_prob=0.2)
        for eid in s.entities:
            if s.get(eid, "info") is None:
                s.add_component(eid, InfoComponent())
        flat = export_flat(s)
        kinds = [k for _, k, _ in flat.nodes]
        totals = {k: 0 for k in ("entity", "trs", "mesh", "action")}
        for eid in s.entities:
            for k, v in s.get(eid, "info").child_type_counts.items():
                totals[k] += v
        # the census counts children per owner; the root is nobody's child
        assert kinds.count("entity") == totals["entity"] + 1
        for k in ("trs", "mesh", "action"):
            assert kinds.count(k) == totals[k]
        assert kinds.count("info") == len(s)
        kinds_by_edge = {k for _, _, k in flat.edges}
        assert kinds_by_edge <= {"parent_child", "entity_component"}


def test_flat_csv_deterministic(tmp_path, rng):
    s = random_scene(rng)
    if s.get(s.root, "mesh") is None:
        s.add_component(s.root, MeshFeatureComponent())
    a, b = export_flat(s).to_csv(), export_flat(parse(serialize(s)).scene).to_csv()
    assert a == b
    assert a["nodes.csv"].startswith("id,kind,category\n")
    assert a["edges.csv"].startswith("src,dst,edge_kind\n")
    assert a["features.csv"].startswith("node,values\n")
    export_flat(s).write(tmp_path)
    assert (tmp_path / "edges.csv").read_text() == a["edges.csv"]
