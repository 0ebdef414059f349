import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from p4mr.dsl import (
    KEYED,
    INT,
    MAP,
    STORE,
    SUM,
    U32,
    ast_to_json,
    build_dag,
    evaluate,
    json_to_ast,
    parse,
    sink_value,
    tokenize,
)
from p4mr.errors import (
    DslSyntaxError,
    DuplicateLabel,
    KindMismatch,
    SchemaError,
    UndefinedReference,
    UnknownTransform,
    UnknownType,
)


def test_three_store_listing_parses_to_five_nodes(sum3_program):
    ast = parse(sum3_program)
    assert [n.label_name for n in ast] == list("ABCDE")
    d = ast[3]
    assert (d.label_index, d.func_type, d.inputs) == (3, SUM, ["A", "B"])
    assert ast[0].func_type == STORE
    assert ast[0].params == {"locator": "ip_h1:path_A"}
    assert (ast[0].host, ast[0].path) == ("ip_h1", "path_A")


def test_empty_program():
    assert parse("") == []
    assert parse("  # only a comment\n\n") == []


def test_use_before_definition():
    with pytest.raises(UndefinedReference) as exc:
        parse("D := SUM(A, B);")
    assert exc.value.name == "A"
    assert (exc.value.line, exc.value.column) == (1, 10)


def test_whitespace_and_comments_are_insignificant(sum3_program):
    squashed = sum3_program.replace("\n", " ").replace(" := ", ":=")
    commented = "# header\n" + sum3_program.replace(";\n", "; # trailing\n")
    assert parse(squashed) == parse(sum3_program) == parse(commented)


@pytest.mark.parametrize("text, exc", [
    ('A := store<uint_16>("h:p");', UnknownType),
    ('A := store<uint_64>("h:p"); B := MAP(A, SQUARE);', UnknownTransform),
    ('A := store<uint_64>("h:p"); A := MAP(A, IDENT);', DuplicateLabel),
    ('A := store<uint_64>("h:p")', DslSyntaxError),
    ('A = store<uint_64>("h:p");', DslSyntaxError),
    ('A := store<uint_64>("nocolon");', DslSyntaxError),
    ('A := SUM(A, A);', UndefinedReference),
    ('a := store<uint_64>("h:p"); B := Sum(a, a);', DslSyntaxError),
])
def test_rejections(text, exc):
    with pytest.raises(exc):
        parse(text)


def test_syntax_error_carries_position():
    with pytest.raises(DslSyntaxError) as exc:
        parse('A := store<uint_64>("h:p");\nB := MAP(A IDENT);')
    assert exc.value.line == 2
    assert exc.value.column == 12
    assert exc.value.expected


def test_tokenizer_positions():
    toks = tokenize("X := SUM(A,\n  B);")
    b = [t for t in toks if t.text == "B"][0]
    assert (b.line, b.column) == (2, 3)


def test_dag_edges_and_sink(sum3_program):
    dag = build_dag(parse(sum3_program))
    assert dag.edges == {(0, 3): 1, (1, 3): 1, (3, 4): 1, (2, 4): 1}
    assert dag.sinks == [4]
    assert dag.in_degree(3) == 2
    assert dag.topological_order() == [0, 1, 2, 3, 4]


def test_single_store_dag():
    dag = build_dag(parse('A := store<uint_32>("h:p");'))
    assert len(dag.nodes) == 1 and dag.edges == {} and dag.sinks == [0]
    assert dag.nodes[0].value_type == U32


def test_self_sum_multiplicity():
    dag = build_dag(parse('A := store<uint_64>("h:p");\nX := SUM(A, A);'))
    assert dag.edges == {(0, 1): 2}
    assert dag.in_degree(1) == 2
    assert dag.out_edges(0) == [1, 1]


def test_value_type_inference():
    ast = parse('A := store<uint_32>("h:a"); B := store<uint_64>("h:b");'
                "M := MAP(A, IDENT); X := SUM(M, M); Y := SUM(M, B);")
    types = {n.label_name: n.value_type for n in ast}
    assert types == {"A": "U32", "B": "U64", "M": "U32", "X": "U32", "Y": "U64"}


def test_word_streams_are_keyed():
    dag = build_dag(parse('T := store<uint_64>("h:t"); W := MAP(T, WORD_TUPLE);'
                          "C := SUM(W, W);"))
    assert dag.kinds == {0: INT, 1: KEYED, 2: KEYED}


@pytest.mark.parametrize("text", [
    'T := store<uint_64>("h:t"); W := MAP(T, WORD_TUPLE); X := SUM(W, T);',
    'T := store<uint_64>("h:t"); W := MAP(T, WORD_TUPLE); X := SUM(T, T);',
    'T := store<uint_64>("h:t"); M := MAP(T, IDENT); W := MAP(M, WORD_TUPLE);',
])
def test_kind_mismatch(text):
    with pytest.raises(KindMismatch):
        parse(text)


def test_json_round_trip(sum3_program):
    ast = parse(sum3_program)
    assert json_to_ast(ast_to_json(ast)) == ast


def test_json_matches_field_by_field_dump(sum3_program):
    doc = json.loads(ast_to_json(parse(sum3_program)))
    assert [d["label_index"] for d in doc] == [0, 1, 2, 3, 4]
    assert doc[0] == {"label_index": 0, "label_name": "A", "func_type": "STORE",
                      "value_type": "U64", "params": {"locator": "ip_h1:path_A"}}
    assert doc[4] == {"label_index": 4, "label_name": "E", "func_type": "SUM",
                      "value_type": "U64", "params": {"inputs": ["C", "D"]}}


@pytest.mark.parametrize("field", ["func_type", "label_name", "params", "value_type"])
def test_json_missing_field(sum3_program, field):
    doc = json.loads(ast_to_json(parse(sum3_program)))
    del doc[2][field]
    with pytest.raises(SchemaError) as exc:
        json_to_ast(json.dumps(doc))
    assert exc.value.field == field


def test_evaluate_wraps_at_declared_width():
    dag = build_dag(parse('A := store<uint_32>("h:a"); X := SUM(A, A);'))
    values = evaluate(dag, {0: (1 << 31) + 5})
    assert sink_value(dag, values, 1) == 10


# -- properties ---------------------------------------------------------------

@st.composite
def programs(draw):
    n_stores = draw(st.integers(1, 4))
    names, lines = [], []
    for i in range(n_stores):
        ty = draw(st.sampled_from(["uint_64", "uint_32"]))
        lines.append(f'S{i} := store<{ty}>("h{i}:p{i}");')
        names.append(f"S{i}")
    for i in range(draw(st.integers(0, 8))):
        if draw(st.booleans()):
            lines.append(f"M{i} := MAP({draw(st.sampled_from(names))}, IDENT);")
            names.append(f"M{i}")
        else:
            a, b = draw(st.sampled_from(names)), draw(st.sampled_from(names))
            lines.append(f"X{i} := SUM({a}, {b});")
            names.append(f"X{i}")
    return "\n".join(lines)


@settings(max_examples=200, deadline=None)
@given(programs())
def test_parse_properties(text):
    ast = parse(text)
    assert parse(text) == ast
    assert json_to_ast(ast_to_json(ast)) == ast
    index = {n.label_name: n.label_index for n in ast}
    for n in ast:
        for ref in n.inputs:
            assert index[ref] < n.label_index
    dag = build_dag(ast)
    order = dag.topological_order()
    pos = {u: i for i, u in enumerate(order)}
    assert all(pos[u] < pos[v] for u, v in dag.edges)
    for n in dag.nodes:
        expected = {STORE: 0, MAP: 1, SUM: 2}[n.func_type]
        assert dag.in_degree(n.label_index) == expected
    assert dag.sinks == [n.label_index for n in ast if not dag.out_edges(n.label_index)]
