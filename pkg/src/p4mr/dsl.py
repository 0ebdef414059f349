"""Frontend for the p4mr dataflow language.

A program is a list of statements::

    A := store<uint_64>("ip_h1:path_A");
    W := MAP(A, WORD_TUPLE);
    D := SUM(A, B);

``parse`` produces a list of :class:`AstNode`, ``build_dag`` turns that into a
:class:`DataflowDag`, and ``evaluate`` computes label values directly from the
source datasets (the host-side reference used to check simulated runs).
"""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import (
    DslSyntaxError,
    DuplicateLabel,
    KindMismatch,
    SchemaError,
    UndefinedReference,
    UnknownTransform,
    UnknownType,
)

STORE = "STORE"
MAP = "MAP"
SUM = "SUM"
FUNC_TYPES = (STORE, MAP, SUM)

U64 = "U64"
U32 = "U32"
VALUE_TYPES = (U64, U32)
WIDTH = {U64: 64, U32: 32}
TYPE_KEYWORDS = {"uint_64": U64, "uint_32": U32}

IDENT = "IDENT"
WORD_TUPLE = "WORD_TUPLE"
TRANSFORMS = (IDENT, WORD_TUPLE)

# stream kinds
INT = "int"
KEYED = "keyed"


@dataclass(frozen=True)
class AstNode:
    label_index: int
    label_name: str
    func_type: str
    value_type: str
    params: dict
    line: int = field(default=0, compare=False, repr=False)
    column: int = field(default=0, compare=False, repr=False)

    @property
    def inputs(self) -> list[str]:
        if self.func_type == SUM:
            return list(self.params["inputs"])
        if self.func_type == MAP:
            return [self.params["input"]]
        return []

    @property
    def host(self) -> str:
        return self.params["locator"].split(":", 1)[0]

    @property
    def path(self) -> str:
        return self.params["locator"].split(":", 1)[1]

    def to_dict(self) -> dict:
        return {
            "label_index": self.label_index,
            "label_name": self.label_name,
            "func_type": self.func_type,
            "value_type": self.value_type,
            "params": dict(self.params),
        }


# -- lexer ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<assign>:=)
  | (?P<string>"[^"\n]*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[<>(),;])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise DslSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# -- parser -----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = repr(text) if text is not None else kind
            got = repr(tok.text) if tok.kind != "eof" else "end of input"
            raise DslSyntaxError(f"unexpected {got}", tok.line, tok.column, want)
        return self.advance()

    def program(self):
        stmts = []
        while self.peek().kind != "eof":
            stmts.append(self.statement())
        return stmts

    def statement(self):
        name = self.expect("ident")
        self.expect("assign")
        head = self.expect("ident")
        if head.text == "store":
            self.expect("punct", "<")
            ty = self.expect("ident")
            if ty.text not in TYPE_KEYWORDS:
                raise UnknownType(f"unknown type {ty.text!r} at line {ty.line}, column {ty.column}")
            self.expect("punct", ">")
            self.expect("punct", "(")
            loc = self.expect("string")
            self.expect("punct", ")")
            locator = loc.text[1:-1]
            if ":" not in locator or not locator.split(":", 1)[0]:
                raise DslSyntaxError("locator must look like host:path", loc.line, loc.column)
            stmt = (STORE, TYPE_KEYWORDS[ty.text], {"locator": locator}, [])
        elif head.text == "MAP":
            self.expect("punct", "(")
            src = self.expect("ident")
            self.expect("punct", ",")
            tr = self.expect("ident")
            self.expect("punct", ")")
            if tr.text not in TRANSFORMS:
                raise UnknownTransform(
                    f"unknown transform {tr.text!r} at line {tr.line}, column {tr.column}")
            stmt = (MAP, None, {"input": src.text, "transform": tr.text}, [src])
        elif head.text == "SUM":
            self.expect("punct", "(")
            a = self.expect("ident")
            self.expect("punct", ",")
            b = self.expect("ident")
            self.expect("punct", ")")
            stmt = (SUM, None, {"inputs": [a.text, b.text]}, [a, b])
        else:
            raise DslSyntaxError(f"unexpected {head.text!r}", head.line, head.column,
                                 "store, MAP or SUM")
        self.expect("punct", ";")
        return name, stmt


def parse(program_text: str) -> list[AstNode]:
    """Parse and validate a program; labels are indexed in statement order."""
    stmts = _Parser(program_text).program()
    nodes: list[AstNode] = []
    by_name: dict[str, AstNode] = {}
    for name_tok, (func, vtype, params, refs) in stmts:
        if name_tok.text in by_name:
            raise DuplicateLabel(
                f"label {name_tok.text!r} redefined at line {name_tok.line}, column {name_tok.column}")
        for ref in refs:
            if ref.text not in by_name:
                raise UndefinedReference(ref.text, ref.line, ref.column)
        if func == MAP:
            src = by_name[params["input"]]
            vtype = U64 if params["transform"] == WORD_TUPLE else src.value_type
        elif func == SUM:
            types = {by_name[n].value_type for n in params["inputs"]}
            vtype = U64 if U64 in types else U32
        node = AstNode(len(nodes), name_tok.text, func, vtype, params,
                       line=name_tok.line, column=name_tok.column)
        nodes.append(node)
        by_name[node.label_name] = node
    stream_kinds(nodes)
    return nodes


def stream_kinds(nodes: list[AstNode]) -> dict[int, str]:
    """Infer INT/KEYED per label and reject programs that mix them.

    WORD_TUPLE may only read a STORE directly, and such a store feeds nothing
    but WORD_TUPLE maps (its file holds words, not integers).
    """
    by_name = {n.label_name: n for n in nodes}
    kinds: dict[int, str] = {}
    word_stores: set[int] = set()
    int_stores: set[int] = set()
    for n in nodes:
        if n.func_type == STORE:
            kinds[n.label_index] = INT
        elif n.func_type == MAP:
            src = by_name[n.params["input"]]
            if n.params["transform"] == WORD_TUPLE:
                if src.func_type != STORE:
                    raise KindMismatch(
                        f"{n.label_name}: WORD_TUPLE must read a store, not {src.label_name}")
                word_stores.add(src.label_index)
                kinds[n.label_index] = KEYED
            else:
                if src.func_type == STORE:
                    int_stores.add(src.label_index)
                kinds[n.label_index] = kinds[src.label_index]
        else:
            ins = [by_name[x] for x in n.params["inputs"]]
            ks = {kinds[i.label_index] for i in ins}
            if len(ks) != 1:
                raise KindMismatch(f"{n.label_name}: SUM over integer and word-count streams")
            for i in ins:
                if i.func_type == STORE:
                    int_stores.add(i.label_index)
            kinds[n.label_index] = ks.pop()
    both = word_stores & int_stores
    if both:
        name = nodes[min(both)].label_name
        raise KindMismatch(f"{name}: store read both as words and as integers")
    return kinds


def word_stores(nodes: list[AstNode]) -> set[int]:
    by_name = {n.label_name: n for n in nodes}
    return {
        by_name[n.params["input"]].label_index
        for n in nodes
        if n.func_type == MAP and n.params["transform"] == WORD_TUPLE
    }


# -- dag --------------------------------------------------------------------

@dataclass
class DataflowDag:
    nodes: list[AstNode]
    edges: dict[tuple[int, int], int]
    sinks: list[int]

    def __post_init__(self):
        self.kinds = stream_kinds(self.nodes) if self.nodes else {}

    def node(self, index: int) -> AstNode:
        return self.nodes[index]

    def by_name(self, name: str) -> AstNode:
        for n in self.nodes:
            if n.label_name == name:
                return n
        raise KeyError(name)

    def in_degree(self, index: int) -> int:
        return sum(m for (_, v), m in self.edges.items() if v == index)

    def out_edges(self, index: int) -> list[int]:
        """Consumers of ``index``, repeated by multiplicity, ascending."""
        out = []
        for (u, v), m in sorted(self.edges.items()):
            if u == index:
                out.extend([v] * m)
        return out

    def producers(self, index: int) -> list[int]:
        out = []
        for (u, v), m in sorted(self.edges.items()):
            if v == index:
                out.extend([u] * m)
        return out

    def compute_labels(self) -> list[int]:
        return [n.label_index for n in self.nodes if n.func_type != STORE]

    def topological_order(self) -> list[int]:
        """Kahn's algorithm, ties broken by ascending label index."""
        import heapq

        indeg = {n.label_index: 0 for n in self.nodes}
        for (_, v), m in self.edges.items():
            indeg[v] += m
        ready = [i for i, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            u = heapq.heappop(ready)
            order.append(u)
            for (a, v), m in sorted(self.edges.items()):
                if a == u:
                    indeg[v] -= m
                    if indeg[v] == 0:
                        heapq.heappush(ready, v)
        if len(order) != len(self.nodes):
            raise ValueError("dependency graph has a cycle")
        return order

    def to_dict(self) -> dict:
        return {
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [{"from": u, "to": v, "multiplicity": m}
                      for (u, v), m in sorted(self.edges.items())],
            "sinks": list(self.sinks),
        }


def build_dag(ast: list[AstNode]) -> DataflowDag:
    index = {n.label_name: n.label_index for n in ast}
    edges: dict[tuple[int, int], int] = {}
    for n in ast:
        for name in n.inputs:
            key = (index[name], n.label_index)
            edges[key] = edges.get(key, 0) + 1
    consumed = {u for u, _ in edges}
    sinks = [n.label_index for n in ast if n.label_index not in consumed]
    dag = DataflowDag(list(ast), edges, sinks)
    dag.topological_order()
    return dag


# -- json -------------------------------------------------------------------

def ast_to_json(ast: list[AstNode]) -> str:
    return json.dumps([n.to_dict() for n in ast], indent=2, sort_keys=True)


def json_to_ast(text: str) -> list[AstNode]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("document", str(exc)) from None
    if not isinstance(doc, list):
        raise SchemaError("document", "top level must be an array")
    nodes = []
    for pos, obj in enumerate(doc):
        if not isinstance(obj, dict):
            raise SchemaError(f"[{pos}]", "expected an object")
        for key, typ in (("label_index", int), ("label_name", str), ("func_type", str),
                         ("value_type", str), ("params", dict)):
            if key not in obj:
                raise SchemaError(key, "missing")
            if not isinstance(obj[key], typ) or isinstance(obj[key], bool):
                raise SchemaError(key, f"expected {typ.__name__}")
        if obj["label_index"] != pos:
            raise SchemaError("label_index", f"expected {pos}, got {obj['label_index']}")
        if obj["func_type"] not in FUNC_TYPES:
            raise SchemaError("func_type", f"unknown {obj['func_type']!r}")
        if obj["value_type"] not in VALUE_TYPES:
            raise SchemaError("value_type", f"unknown {obj['value_type']!r}")
        params = obj["params"]
        func = obj["func_type"]
        if func == STORE:
            if not isinstance(params.get("locator"), str) or ":" not in params["locator"]:
                raise SchemaError("params.locator", "expected 'host:path'")
            params = {"locator": params["locator"]}
        elif func == SUM:
            ins = params.get("inputs")
            if not (isinstance(ins, list) and len(ins) == 2 and all(isinstance(x, str) for x in ins)):
                raise SchemaError("params.inputs", "expected two label names")
            params = {"inputs": list(ins)}
        else:
            if not isinstance(params.get("input"), str):
                raise SchemaError("params.input", "expected a label name")
            if params.get("transform") not in TRANSFORMS:
                raise SchemaError("params.transform", f"unknown {params.get('transform')!r}")
            params = {"input": params["input"], "transform": params["transform"]}
        nodes.append(AstNode(pos, obj["label_name"], func, obj["value_type"], params))
    names: dict[str, int] = {}
    for n in nodes:
        if n.label_name in names:
            raise SchemaError("label_name", f"duplicate {n.label_name!r}")
        for ref in n.inputs:
            if ref not in names:
                raise SchemaError("params", f"{n.label_name} references undefined {ref!r}")
        names[n.label_name] = n.label_index
    stream_kinds(nodes)
    return nodes


# -- reference evaluation ---------------------------------------------------

def wrap(value: int, value_type: str) -> int:
    return value & ((1 << WIDTH[value_type]) - 1)


def aggregate_items(items: Iterable[int], words: bool):
    """Collapse one store's items: exact integer sum, or key counts for words."""
    if words:
        return Counter(items)
    return sum(items)


def evaluate(dag: DataflowDag, aggregates: Mapping[int, object]) -> dict[int, object]:
    """Value of every label given per-store aggregates (see ``aggregate_items``).

    SUM registers wrap at their declared width; stream labels (stores and
    maps) are reported the way the collection host folds them.
    """
    values: dict[int, object] = {}
    for i in dag.topological_order():
        n = dag.nodes[i]
        if n.func_type == STORE:
            values[i] = aggregates[i]
        elif n.func_type == MAP:
            src = values[dag.by_name(n.params["input"]).label_index]
            values[i] = src
        else:
            a, b = (values[dag.by_name(x).label_index] for x in n.params["inputs"])
            if isinstance(a, Counter):
                values[i] = Counter({k: wrap(a.get(k, 0) + b.get(k, 0), n.value_type)
                                     for k in set(a) | set(b)})
            else:
                values[i] = wrap(a + b, n.value_type)
    return values


def sink_value(dag: DataflowDag, values: Mapping[int, object], sink: int):
    v = values[sink]
    if isinstance(v, Counter):
        return {k: wrap(c, dag.nodes[sink].value_type) for k, c in v.items()}
    return wrap(v, dag.nodes[sink].value_type)
