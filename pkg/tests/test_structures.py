"""Grammar, parser and round-trip tests for structured outputs."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from costforge.errors import InvariantViolation, KindMismatch, MalformedTags, ParseError
from costforge.structures import (
    Schema,
    StructureKind,
    StructuredOutput,
    extract_tagged_sections,
    parse_steps,
    parse_structured_output,
    serialize_structured_output,
    serialize_tagged,
    TaggedOutput,
    validate_against_schema,
)


# --- tag extraction ---

def test_extract_tagged_basic():
    out = extract_tagged_sections(
        "<reasoning>Step 1: find rows</reasoning><answer>| A |\n| 1 |</answer>"
    )
    assert out.reasoning == "Step 1: find rows"
    assert out.answer == "| A |\n| 1 |"
    assert out.extraneous == ""


def test_extract_tagged_missing_answer():
    with pytest.raises(MalformedTags):
        extract_tagged_sections("<reasoning>x</reasoning>")


def test_extract_tagged_extraneous_concatenation():
    out = extract_tagged_sections("noise <reasoning>a</reasoning><answer>b</answer> tail")
    assert out.extraneous == "noise  tail"
    assert out.reasoning == "a"
    assert out.answer == "b"


@pytest.mark.parametrize(
    "text",
    [
        "",
        "<answer>b</answer><reasoning>a</reasoning>",
        "<reasoning>a<reasoning>b</reasoning></reasoning><answer>c</answer>",
        "<reasoning>a</reasoning><answer>b</answer><answer>c</answer>",
        "<reasoning>a</reasoning><reasoning>b</reasoning><answer>c</answer>",
        "<answer>only</answer>",
    ],
)
def test_extract_tagged_malformed(text):
    with pytest.raises(MalformedTags):
        extract_tagged_sections(text)


@given(
    st.text(alphabet="abc XYZ\n.,", max_size=40),
    st.text(alphabet="abc XYZ\n|.,", max_size=40),
)
def test_tag_idempotence(reasoning, answer):
    t = TaggedOutput(reasoning=reasoning, answer=answer)
    assert extract_tagged_sections(serialize_tagged(t)) == t


# --- step parsing ---

def test_parse_steps_two_labels():
    trace = parse_steps("Step 1: pick schema\nStep 2: extract rows")
    assert [s.body for s in trace.steps] == ["pick schema", "extract rows"]
    assert [s.label for s in trace.steps] == [1, 2]
    assert trace.monotonic


def test_parse_steps_no_labels():
    trace = parse_steps("free-form reasoning, no labels")
    assert trace.steps == ()
    assert trace.raw_text == "free-form reasoning, no labels"
    assert not trace.monotonic


def test_parse_steps_gap_in_labels():
    # Derived by inspection of the splitting rule: both lines are labels,
    # encounter indices are renumbered 1..2 while the written labels (1, 3)
    # are preserved, and the gap clears the well-ordered flag.
    trace = parse_steps("Step 1: a\nStep 3: b")
    assert [(s.index, s.label) for s in trace.steps] == [(1, 1), (2, 3)]
    assert not trace.monotonic


def test_parse_steps_multiline_bodies_and_case():
    trace = parse_steps("intro text\nstep 1. first\ncontinued\nSTEP 2: second")
    assert len(trace.steps) == 2
    assert trace.steps[0].body == "first\ncontinued"
    assert trace.steps[1].body == "second"
    assert trace.monotonic


@given(st.lists(st.text(alphabet="abc xyz,.", min_size=1, max_size=20), min_size=1, max_size=6))
def test_step_segmentation_reconstructs(bodies):
    bodies = [b.strip() or "x" for b in bodies]
    raw = "\n".join(f"Step {i}: {b}" for i, b in enumerate(bodies, start=1))
    trace = parse_steps(raw)
    rebuilt = "\n".join(f"Step {s.label}: {s.body}" for s in trace.steps)
    norm = lambda s: " ".join(s.split())
    assert norm(rebuilt) == norm(raw)
    assert trace.monotonic


# --- canonical grammars ---

def test_parse_table_minimal():
    s = parse_structured_output("| Company | Year |\n| A | 2020 |", StructureKind.TABLE)
    assert s.table.header == ("Company", "Year")
    assert s.table.rows == (("A", "2020"),)


def test_parse_graph_minimal():
    s = parse_structured_output("(A) -[owns]-> (B)", StructureKind.GRAPH)
    assert s.graph.nodes == ("A", "B")
    assert s.graph.edges == (("A", "owns", "B"),)


def test_parse_table_ragged_rejected_with_position():
    with pytest.raises(ParseError) as err:
        parse_structured_output("| A |\n| 1 | 2 |", StructureKind.TABLE)
    assert err.value.line == 2


def test_parse_graph_dangling_edge_rejected_with_position():
    with pytest.raises(ParseError) as err:
        parse_structured_output("(A) -[owns]-> ", StructureKind.GRAPH)
    assert err.value.line == 1


def test_parse_chunks_out_of_order_rejected():
    with pytest.raises(ParseError) as err:
        parse_structured_output("[1] alpha\n[3] beta", StructureKind.CHUNKS)
    assert err.value.line == 2


def test_parse_kind_mismatch():
    with pytest.raises(KindMismatch):
        parse_structured_output("(A) -[r]-> (B)", StructureKind.TABLE)
    with pytest.raises(KindMismatch):
        parse_structured_output("| A |\n| 1 |", StructureKind.CHUNKS)


def test_serialize_minimal_forms():
    table = StructuredOutput.from_table(["A"], [["1"]])
    assert serialize_structured_output(table) == "| A |\n| 1 |"
    graph = StructuredOutput.from_graph([("X", "r", "Y")])
    assert serialize_structured_output(graph) == "(X) -[r]-> (Y)"
    chunks = StructuredOutput.from_chunks(["alpha", "beta"])
    assert serialize_structured_output(chunks) == "[1] alpha\n[2] beta"


def test_serialize_escapes_pipes():
    s = StructuredOutput.from_table(["A"], [["x|y"], ["a\\b"]])
    text = serialize_structured_output(s)
    assert "\\|" in text
    assert parse_structured_output(text, StructureKind.TABLE) == s


def test_chunks_provenance_round_trip():
    s = StructuredOutput.from_chunks([("alpha", "doc-7"), "beta"])
    text = serialize_structured_output(s)
    assert text == "[1] alpha @doc:doc-7\n[2] beta"
    assert parse_structured_output(text, StructureKind.CHUNKS) == s


def test_explicitly_empty_chunks_round_trip():
    s = StructuredOutput.from_chunks([], explicitly_empty=True)
    text = serialize_structured_output(s)
    assert parse_structured_output(text, StructureKind.CHUNKS) == s


def test_empty_chunks_without_flag_rejected():
    with pytest.raises(InvariantViolation):
        StructuredOutput.from_chunks([])


def test_constructed_dangling_edge_rejected():
    with pytest.raises(InvariantViolation):
        StructuredOutput.from_graph([("A", "r", "B")], nodes=["A"])


def test_kind_field_mismatch_rejected():
    table = StructuredOutput.from_table(["A"], []).table
    with pytest.raises(InvariantViolation):
        StructuredOutput(kind=StructureKind.GRAPH, table=table)


def test_structure_kind_round_trip():
    for kind in StructureKind:
        assert StructureKind.parse(kind.render()) is kind


# --- property: parse . serialize == identity ---

_CELL = st.text(alphabet="abYZ 019|\\.,:-", max_size=10).map(str.strip)
_NAME = st.text(alphabet="abYZ 019.,-", min_size=1, max_size=10).map(str.strip).filter(bool)


@st.composite
def tables(draw):
    width = draw(st.integers(1, 4))
    header = [draw(_NAME) for _ in range(width)]
    n_rows = draw(st.integers(0, 5))
    rows = [[draw(_CELL) for _ in range(width)] for _ in range(n_rows)]
    return StructuredOutput.from_table(header, rows)


@st.composite
def graphs(draw):
    names = draw(st.lists(_NAME, min_size=1, max_size=5, unique=True))
    n_edges = draw(st.integers(0, 6))
    edges = [
        (draw(st.sampled_from(names)), draw(_NAME), draw(st.sampled_from(names)))
        for _ in range(n_edges)
    ]
    return StructuredOutput.from_graph(edges, nodes=names)


@st.composite
def chunk_sets(draw):
    n = draw(st.integers(0, 5))
    if n == 0:
        return StructuredOutput.from_chunks([], explicitly_empty=True)
    items = []
    for _ in range(n):
        text = draw(_NAME)
        doc = draw(st.one_of(st.none(), st.text(alphabet="abc019-", min_size=1, max_size=6)))
        items.append((text, doc) if doc else text)
    return StructuredOutput.from_chunks(items)


@settings(max_examples=200)
@given(st.one_of(tables(), graphs(), chunk_sets()))
def test_round_trip_identity(s):
    text = serialize_structured_output(s)
    assert parse_structured_output(text, s.kind) == s
    # serialization is deterministic
    assert serialize_structured_output(s) == text


# --- schema validation ---

def test_validate_exact_match():
    schema = Schema(kind=StructureKind.TABLE, attributes=("Company", "Year"))
    s = StructuredOutput.from_table(["Company", "Year"], [["A", "2020"]])
    report = validate_against_schema(s, schema)
    assert report.aligned
    assert report.missing_attributes == ()
    assert report.row_count == 1


def test_validate_missing_attribute():
    schema = Schema(kind=StructureKind.TABLE, attributes=("Company", "Year"))
    s = StructuredOutput.from_table(["Company"], [["A"], [""]])
    report = validate_against_schema(s, schema)
    assert not report.aligned
    assert report.missing_attributes == ("Year",)
    assert report.empty_cell_count == 1


def test_validate_kind_mismatch():
    schema = Schema(kind=StructureKind.GRAPH, attributes=("Company",))
    s = StructuredOutput.from_table(["Company"], [])
    with pytest.raises(KindMismatch):
        validate_against_schema(s, schema)


def test_schema_invariants():
    with pytest.raises(InvariantViolation):
        Schema(kind=StructureKind.TABLE, attributes=())
    with pytest.raises(InvariantViolation):
        Schema(kind=StructureKind.TABLE, attributes=("A", "A"))
