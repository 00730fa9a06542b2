"""The ``.unisg`` text format.

Grammar::

    document   := "unisg" INT scene ;
    scene      := "scene" STRING "{" meta* entity? "}" ;
    meta       := IDENT "=" value ;
    entity     := "entity" STRING "{" (component | entity | meta)* "}" ;
    component  := ("info"|"trs"|"mesh"|"action") "{" (IDENT "=" value)* "}" ;
    value      := STRING | NUMBER | "[" (NUMBER ("," NUMBER)*)? "]" ;

``#`` starts a comment that runs to the end of the line.  Strings are
double-quoted, may not span lines, and support ``\\"`` and ``\\\\`` escapes.

Entity meta: ``category``, which is reserved and may not appear as a
scene-level key.  Component keys: ``trs`` takes ``form``,
``coeffs`` and ``scale``; ``mesh`` takes ``feature``; ``action`` takes
``type``, ``params``, ``refs`` and ``satisfied``.  Action refs are document
order indices of entities (the root is 0); parsed entities get those indices
as their ids.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass

import numpy as np

from .scenegraph import (
    COMPONENT_KINDS,
    MESH_FEATURE_SIZE,
    ActionDataComponent,
    InfoComponent,
    MeshFeatureComponent,
    Scene,
    SceneError,
    TRSComponent,
)
from .xform import ARITY, Form, InvalidTransform, TransformRepr

FORMAT_VERSION = 1
INDENT = 2
# reserved at scene level so a lost entity header is caught where it was lost
ENTITY_KEYS = ("category",)
COMPONENT_KEYS = {
    "info": (),
    "trs": ("coeffs", "form", "scale"),
    "mesh": ("feature",),
    "action": ("params", "refs", "satisfied", "type"),
}


class SceneParseError(ValueError):
    def __init__(self, message, line, col, expected=()):
        self.message = message
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        text = f"{line}:{col}: {message}"
        if self.expected:
            text += f" (expected {', '.join(self.expected)})"
        super().__init__(text)


@dataclass
class SceneDocument:
    scene: Scene
    format_version: int = FORMAT_VERSION


# -- lexer ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str
    value: object
    line: int
    col: int
    first_on_line: bool = False
    indent: int = 1


_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_PUNCT = {"{": "LBRACE", "}": "RBRACE", "[": "LBRACK", "]": "RBRACK", "=": "EQ", ",": "COMMA"}
_DESCRIBE = {
    "LBRACE": "'{'", "RBRACE": "'}'", "LBRACK": "'['", "RBRACK": "']'", "EQ": "'='", "COMMA": "','",
    "IDENT": "identifier", "STRING": "string", "NUMBER": "number", "EOF": "end of input",
}


def tokenize(text: str) -> list[Token]:
    tokens = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        i = 0
        first = True
        indent = 1
        n = len(line)
        while i < n:
            ch = line[i]
            if ch in " \t\r":
                i += 1
                continue
            if ch == "#":
                break
            col = i + 1
            if first:
                indent = col
            if ch in _PUNCT:
                tok = Token(_PUNCT[ch], ch, lineno, col, first, indent)
                i += 1
            elif ch == '"':
                j = i + 1
                buf = []
                while j < n and line[j] != '"':
                    if line[j] == "\\":
                        if j + 1 < n and line[j + 1] in '"\\':
                            buf.append(line[j + 1])
                            j += 2
                            continue
                        raise SceneParseError("invalid escape in string", lineno, j + 1)
                    buf.append(line[j])
                    j += 1
                if j >= n:
                    raise SceneParseError("unterminated string", lineno, col)
                tok = Token("STRING", "".join(buf), lineno, col, first, indent)
                i = j + 1
            elif (m := _NUMBER.match(line, i)) and (m.end() == n or not (line[m.end()].isalnum() or line[m.end()] in "_.")):
                tok = Token("NUMBER", m.group(), lineno, col, first, indent)
                i = m.end()
            elif m := _IDENT.match(line, i):
                tok = Token("IDENT", m.group(), lineno, col, first, indent)
                i = m.end()
            else:
                raise SceneParseError(f"unexpected character {ch!r}", lineno, col)
            tokens.append(tok)
            first = False
    last = text.count("\n") + 1
    tokens.append(Token("EOF", None, last, len(text.split("\n")[-1]) + 1, True, 1))
    return tokens


def _block_lines(tokens, stop):
    """Yield (token, open blocks) for each line-leading token before ``stop``.

    Lines continuing a bracketed list or a ``key =`` are skipped.  Each open
    block is [opener indent, opener token, first child indent or None].
    """
    stack = []
    brackets = 0
    prev = None
    for k in range(stop):
        tok = tokens[k]
        continuation = brackets > 0 or (prev is not None and prev.kind == "EQ")
        if tok.first_on_line and stack and not continuation:
            yield tok, stack
        if tok.kind == "LBRACE":
            stack.append([tok.indent, tok, None])
        elif tok.kind == "RBRACE" and stack:
            stack.pop()
        elif tok.kind == "LBRACK":
            brackets += 1
        elif tok.kind == "RBRACK":
            brackets = max(0, brackets - 1)
        prev = tok


def _indent_step(tokens):
    # the usual opener-to-first-child offset among blocks whose closing brace
    # lines up with their opener, if at least half of them agree
    steps = []
    for tok, stack in _block_lines(tokens, len(tokens)):
        block = stack[-1]
        if tok.kind == "RBRACE":
            if block[2] is not None and tok.indent == block[0]:
                steps.append(block[2] - block[0])
        elif block[2] is None:
            block[2] = tok.indent
    # ties go to the serializer's own two-space step
    best = max(set(steps), key=lambda d: (steps.count(d), d == INDENT), default=None)
    if best is None or best <= 0 or 2 * steps.count(best) < len(steps):
        return None
    return best


def _indent_anomaly(tokens, stop):
    """First line before ``stop`` whose indentation contradicts the block
    nesting: a closing brace not aligned with its opener, or a line inside a
    block that is not indented like the block's other lines.  Only used to
    sharpen error positions; returns (token, opener) or None."""
    step = _indent_step(tokens)
    for tok, stack in _block_lines(tokens, stop):
        block = stack[-1]
        if tok.kind == "RBRACE":
            if tok.indent != block[0]:
                return tok, block[1]
        elif tok.indent <= block[0]:
            return tok, block[1]
        elif block[2] is None:
            if step is not None and tok.indent != block[0] + step:
                return tok, block[1]
            block[2] = tok.indent
        elif tok.indent != block[2]:
            return tok, block[1]
    return None


# -- parser -----------------------------------------------------------------------------

@dataclass
class _Value:
    value: object
    tok: Token


class _Parser:
    def __init__(self, text):
        self.tokens = tokenize(text)
        self.pos = 0
        self.scene: Scene | None = None
        self.pending_actions = []

    # token helpers
    def peek(self, offset=0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def error(self, message, tok=None, expected=()):
        tok = tok or self.peek()
        return SceneParseError(message, tok.line, tok.col, expected)

    def expect(self, kind, value=None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (value is not None and tok.value != value):
            want = repr(value) if value is not None else _DESCRIBE[kind]
            got = _DESCRIBE[tok.kind] if tok.kind == "EOF" else repr(tok.value)
            raise self.error(f"unexpected {got}", tok, (want,))
        self.pos += 1
        return tok

    # grammar
    def document(self) -> SceneDocument:
        self.expect("IDENT", "unisg")
        vtok = self.expect("NUMBER")
        if vtok.value != str(FORMAT_VERSION):
            raise self.error(f"unsupported format version {vtok.value}", vtok, (str(FORMAT_VERSION),))
        self.expect("IDENT", "scene")
        name = self.expect("STRING").value
        self.expect("LBRACE")
        self.scene = Scene(name)
        while self.peek().kind == "IDENT" and self.peek().value != "entity":
            ktok = self.peek()
            if ktok.value in ENTITY_KEYS:
                raise self.error(f"{ktok.value!r} is an entity key; is an entity header missing?", ktok)
            key, val = self.meta()
            if key in self.scene.metadata:
                raise self.error(f"duplicate scene key {key!r}", val.tok)
            self.scene.metadata[key] = val.value
        if self.peek().kind == "IDENT":
            self.entity(None)
        self.expect("RBRACE")
        self.expect("EOF")
        self.resolve_actions()
        return SceneDocument(self.scene, FORMAT_VERSION)

    def meta(self):
        key = self.expect("IDENT").value
        self.expect("EQ")
        return key, self.value()

    def value(self) -> _Value:
        tok = self.peek()
        if tok.kind == "STRING":
            self.pos += 1
            return _Value(tok.value, tok)
        if tok.kind == "NUMBER":
            self.pos += 1
            return _Value(float(tok.value), tok)
        if tok.kind == "LBRACK":
            self.pos += 1
            items = []
            if self.peek().kind != "RBRACK":
                items.append(float(self.expect("NUMBER").value))
                while self.peek().kind == "COMMA":
                    self.pos += 1
                    items.append(float(self.expect("NUMBER").value))
            self.expect("RBRACK")
            return _Value(items, tok)
        raise self.error(f"unexpected {_DESCRIBE[tok.kind] if tok.kind == 'EOF' else repr(tok.value)}",
                         tok, ("string", "number", "'['"))

    def entity(self, parent):
        self.expect("IDENT", "entity")
        name = self.expect("STRING").value
        self.expect("LBRACE")
        eid = self.scene.add_entity(name, parent=parent)
        seen_meta = set()
        while True:
            tok = self.peek()
            if tok.kind == "RBRACE":
                self.pos += 1
                return
            if tok.kind != "IDENT":
                raise self.error(f"unexpected {_DESCRIBE[tok.kind] if tok.kind == 'EOF' else repr(tok.value)}",
                                 tok, ("'}'", "'entity'", "component", "identifier"))
            if tok.value == "entity":
                self.entity(eid)
            elif tok.value in COMPONENT_KINDS and self.peek(1).kind == "LBRACE":
                self.component(eid)
            else:
                key, val = self.meta()
                if key in seen_meta:
                    raise self.error(f"duplicate key {key!r}", tok)
                seen_meta.add(key)
                if key != "category":
                    raise self.error(f"unknown entity key {key!r}", tok, ("'category'",))
                if not isinstance(val.value, str):
                    raise self.error("category must be a string", val.tok)
                self.scene.entities[eid].category = val.value

    def component(self, owner):
        ktok = self.expect("IDENT")
        kind = ktok.value
        self.expect("LBRACE")
        fields: dict[str, _Value] = {}
        while self.peek().kind != "RBRACE":
            tok = self.peek()
            if tok.kind != "IDENT":
                raise self.error(f"unexpected {_DESCRIBE[tok.kind] if tok.kind == 'EOF' else repr(tok.value)}",
                                 tok, ("'}'", "identifier"))
            allowed = COMPONENT_KEYS.get(kind, ())
            if tok.value not in allowed:
                raise self.error(f"unknown {kind} key {tok.value!r}", tok, tuple(repr(a) for a in allowed))
            key, val = self.meta()
            if key in fields:
                raise self.error(f"duplicate key {key!r}", tok)
            fields[key] = val
        end = self.expect("RBRACE")
        if kind in self.scene.components[owner]:
            raise self.error(f"duplicate {kind} component", ktok)
        builder = getattr(self, f"build_{kind}")
        comp = builder(ktok, end, fields)
        if comp is not None:
            self.scene.components[owner][kind] = comp
        else:
            self.pending_actions.append((owner, ktok, fields))
            self.scene.components[owner][kind] = None

    def _required(self, fields, key, end):
        if key not in fields:
            raise self.error(f"missing key {key!r}", end)
        return fields[key]

    def _vector(self, val: _Value, arity, what):
        if not isinstance(val.value, list):
            raise self.error(f"{what} must be a list", val.tok)
        if arity is not None and len(val.value) != arity:
            raise self.error(f"{what} needs {arity} values, got {len(val.value)}", val.tok)
        return np.array(val.value, dtype=float)

    def build_info(self, ktok, end, fields):
        return InfoComponent()

    def build_trs(self, ktok, end, fields):
        fval = self._required(fields, "form", end)
        try:
            form = Form(fval.value)
        except ValueError:
            raise self.error(f"unknown representation {fval.value!r}", fval.tok,
                             tuple(f'"{f.value}"' for f in Form)) from None
        coeffs = self._vector(self._required(fields, "coeffs", end), ARITY[form], "coeffs")
        scale = self._vector(fields["scale"], 3, "scale") if "scale" in fields else np.ones(3)
        try:
            return TRSComponent(TransformRepr(form, coeffs, scale))
        except InvalidTransform as exc:
            raise self.error(str(exc), fields["coeffs"].tok) from None

    def build_mesh(self, ktok, end, fields):
        return MeshFeatureComponent(self._vector(self._required(fields, "feature", end), MESH_FEATURE_SIZE, "feature"))

    def build_action(self, ktok, end, fields):
        return None

    def resolve_actions(self):
        order = list(self.scene.iter_depth_first())
        for owner, ktok, fields in self.pending_actions:
            end = ktok
            tval = self._required(fields, "type", end)
            if not isinstance(tval.value, str):
                raise self.error("action type must be a string", tval.tok)
            params = self._vector(self._required(fields, "params", end), None, "params")
            rval = self._required(fields, "refs", end)
            refs = self._vector(rval, None, "refs")
            if np.any(refs != np.round(refs)) or np.any(refs < 0) or np.any(refs >= len(order)):
                raise self.error("refs must be entity indices in document order", rval.tok)
            satisfied = False
            if "satisfied" in fields:
                sval = fields["satisfied"]
                if sval.value not in (0.0, 1.0):
                    raise self.error("satisfied must be 0 or 1", sval.tok)
                satisfied = sval.value == 1.0
            try:
                comp = ActionDataComponent(tval.value, params, [order[int(r)] for r in refs], satisfied)
            except SceneError as exc:
                raise self.error(str(exc), ktok) from None
            self.scene.components[owner]["action"] = comp


def parse(text: str) -> SceneDocument:
    parser = _Parser.__new__(_Parser)
    try:
        parser.__init__(text)
        return parser.document()
    except SceneParseError as exc:
        tokens = getattr(parser, "tokens", None)
        if tokens is None:
            raise
        stop = next((k for k, t in enumerate(tokens) if (t.line, t.col) >= (exc.line, exc.col)), len(tokens))
        found = _indent_anomaly(tokens, stop)
        if found is None:
            raise
        tok, opener = found
        raise SceneParseError(
            f"indentation here does not fit the block opened at {opener.line}:{opener.col}"
            f" (the parser stopped at {exc.line}:{exc.col}: {exc.message})",
            tok.line, tok.col, ("'}'",),
        ) from exc


def load(path) -> SceneDocument:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


# -- serializer --------------------------------------------------------------------------

def format_number(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite number {x}")
    if x == 0.0:
        return "0"
    s = repr(x)
    return s[:-2] if s.endswith(".0") else s


def format_string(s: str) -> str:
    if "\n" in s:
        raise ValueError("strings may not contain newlines")
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_list(values) -> str:
    return "[" + ", ".join(format_number(v) for v in values) + "]"


def _format_value(v) -> str:
    if isinstance(v, str):
        return format_string(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return format_list(v)
    return format_number(v)


def _check_key(key):
    if not _IDENT.fullmatch(key) or key == "entity" or key in ENTITY_KEYS:
        raise ValueError(f"invalid key {key!r}")


def serialize(doc) -> str:
    scene = doc.scene if isinstance(doc, SceneDocument) else doc
    order = list(scene.iter_depth_first())
    index = {eid: i for i, eid in enumerate(order)}
    out = [f"unisg {FORMAT_VERSION}", f"scene {format_string(scene.name)} {{"]
    for key in sorted(scene.metadata):
        _check_key(key)
        out.append(f"{' ' * INDENT}{key} = {_format_value(scene.metadata[key])}")

    def emit(eid, depth):
        pad = " " * (INDENT * depth)
        ent = scene.entities[eid]
        out.append(f"{pad}entity {format_string(ent.name)} {{")
        out.append(f"{pad}  category = {format_string(ent.category)}")
        slots = scene.components[eid]
        for kind in COMPONENT_KINDS:
            c = slots.get(kind)
            if c is None:
                continue
            if kind == "info":
                body = ""
            elif kind == "trs":
                body = (f"coeffs = {format_list(c.repr.coeffs)} form = {format_string(c.repr.form.value)} "
                        f"scale = {format_list(c.repr.scale)}")
            elif kind == "mesh":
                body = f"feature = {format_list(c.feature)}"
            else:
                missing = [r for r in c.refs if r not in index]
                if missing:
                    raise ValueError(f"action on {scene.path(eid)} refers to missing entities {missing}")
                body = (f"params = {format_list(c.params)} refs = {format_list([index[r] for r in c.refs])} "
                        f"satisfied = {int(bool(c.satisfied))} type = {format_string(c.action_type)}")
            out.append(f"{pad}  {kind} {{ {body} }}" if body else f"{pad}  {kind} {{ }}")
        for child in ent.children:
            emit(child, depth + 1)
        out.append(f"{pad}}}")

    if scene.root is not None:
        emit(scene.root, 1)
    out.append("}")
    return "\n".join(out) + "\n"


def save(doc, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize(doc))


# -- flat interchange ----------------------------------------------------------------------

@dataclass
class FlatExport:
    """Node, edge and feature tables.

    CSV layouts (header row included):

    * ``nodes.csv``: ``id,kind,category``
    * ``edges.csv``: ``src,dst,edge_kind`` with ``parent_child`` or
      ``entity_component``
    * ``features.csv``: ``node,values`` header, then one row per component
      node holding its id and its native features (info 4, trs by form,
      mesh 1024, action by type)
    """

    nodes: list
    edges: list
    features: list

    def to_csv(self) -> dict:
        nodes = ["id,kind,category"] + [f"{i},{k},{c}" for i, k, c in self.nodes]
        edges = ["src,dst,edge_kind"] + [f"{s},{d},{k}" for s, d, k in self.edges]
        feats = ["node,values"] + [
            ",".join([str(i)] + [format_number(v) for v in vec]) for i, vec in self.features
        ]
        return {name: "\n".join(rows) + "\n" for name, rows in
                (("nodes.csv", nodes), ("edges.csv", edges), ("features.csv", feats))}

    def write(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        for name, text in self.to_csv().items():
            with open(os.path.join(directory, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


def export_flat(doc) -> FlatExport:
    from .export import native_features, node_order

    scene = doc.scene if isinstance(doc, SceneDocument) else doc
    nodes, edges, features = [], [], []
    layout = node_order(scene)
    for i, (eid, kind) in enumerate(layout.nodes):
        nodes.append((i, kind, scene.entities[eid].category))
        if kind != "entity":
            features.append((i, native_features(scene, eid, kind)))
    for a, b, k in layout.edges:
        edges.append((a, b, k))
    return FlatExport(nodes, edges, features)
