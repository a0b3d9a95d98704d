"""Data model and canonical text grammars for serialized structured outputs.

A structured output is exactly one of three kinds:

* table  -- pipe-delimited rows, first row is the header:
            ``| Company | Year |`` / ``| A | 2020 |``.
            Cells are trimmed; literal pipes and backslashes are escaped
            as ``\\|`` and ``\\\\``.
* graph  -- one edge per line, ``(src) -[rel]-> (dst)``, plus optional
            isolated-node lines ``(name)``.
* chunks -- excerpt lines ``[k] text`` with optional provenance suffix
            `` @doc:<id>``; an explicitly empty set serializes to the
            single line ``[empty]``.

Parsing is strict: ragged tables, malformed edges and out-of-order chunk
indices are rejected with positioned errors. Repairing bad model output
is the refinement loop's job, not the parser's.

All values are immutable after construction and safe to share between
threads. ``parse_structured_output(serialize_structured_output(s), s.kind)``
is the identity on every valid value.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .errors import InvariantViolation, KindMismatch, MalformedTags, ParseError


class StructureKind(enum.Enum):
    """The three supported structure kinds."""

    TABLE = "table"
    GRAPH = "graph"
    CHUNKS = "chunks"

    def render(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, text: str) -> "StructureKind":
        """Parse a rendered kind name, case-insensitively."""
        key = text.strip().lower()
        for kind in cls:
            if key == kind.value:
                return kind
        raise KindMismatch(f"unknown structure kind: {text!r}")


# --- tagged model output ---

_TAG_TOKENS = ("<reasoning>", "</reasoning>", "<answer>", "</answer>")
_TAG_RE = re.compile("|".join(re.escape(t) for t in _TAG_TOKENS))


@dataclass(frozen=True)
class TaggedOutput:
    """The two tagged sections of a model reply plus anything outside them."""

    reasoning: str
    answer: str
    extraneous: str = ""


def extract_tagged_sections(text: str) -> TaggedOutput:
    """Split model output into reasoning, answer, and extraneous text.

    The text must contain exactly one ``<reasoning>...</reasoning>`` pair
    followed by exactly one ``<answer>...</answer>`` pair. Inner contents
    are returned verbatim; all top-level text outside the two pairs is
    concatenated into ``extraneous``.

    Raises MalformedTags for missing, duplicated, nested or reordered tags.
    """
    tokens = [(m.start(), m.end(), m.group()) for m in _TAG_RE.finditer(text)]
    sequence = [t[2] for t in tokens]
    if sequence != list(_TAG_TOKENS):
        if not sequence:
            raise MalformedTags("no reasoning/answer tags found")
        raise MalformedTags(f"bad tag sequence: {' '.join(sequence)}")
    (r_open, r_close, a_open, a_close) = tokens
    reasoning = text[r_open[1]:r_close[0]]
    answer = text[a_open[1]:a_close[0]]
    extraneous = text[:r_open[0]] + text[r_close[1]:a_open[0]] + text[a_close[1]:]
    return TaggedOutput(reasoning=reasoning, answer=answer, extraneous=extraneous)


def serialize_tagged(tagged: TaggedOutput) -> str:
    """Render a TaggedOutput back to tagged text (extraneous is dropped)."""
    return (
        f"<reasoning>{tagged.reasoning}</reasoning>"
        f"<answer>{tagged.answer}</answer>"
    )


# --- reasoning traces ---

_STEP_LABEL_RE = re.compile(r"^[ \t]*step[ \t]+(\d+)[ \t]*[:.][ \t]?", re.IGNORECASE)


@dataclass(frozen=True)
class Step:
    """One labeled reasoning step.

    ``index`` is the 1-based position in encounter order; ``label`` is the
    integer the model actually wrote.
    """

    index: int
    label: int
    body: str


@dataclass(frozen=True)
class ReasoningTrace:
    """An ordered reasoning trace with its raw source text."""

    raw_text: str
    steps: tuple[Step, ...] = ()

    @property
    def monotonic(self) -> bool:
        """True iff there is at least one step and labels run 1, 2, ..., N."""
        if not self.steps:
            return False
        return all(s.label == i + 1 for i, s in enumerate(self.steps))


def parse_steps(reasoning: str) -> ReasoningTrace:
    """Segment reasoning text on step-label lines.

    A label is a line beginning with ``Step <k>:`` or ``Step <k>.``
    (case-insensitive, leading whitespace tolerated). Text before the first
    label is not part of any step. Zero labels is a valid result.
    """
    lines = reasoning.split("\n")
    steps: list[Step] = []
    current_label: int | None = None
    current_body: list[str] = []

    def flush() -> None:
        if current_label is None:
            return
        body = "\n".join(current_body).strip()
        steps.append(Step(index=len(steps) + 1, label=current_label, body=body))

    for line in lines:
        m = _STEP_LABEL_RE.match(line)
        if m:
            flush()
            current_label = int(m.group(1))
            current_body = [line[m.end():]]
        elif current_label is not None:
            current_body.append(line)
    flush()
    return ReasoningTrace(raw_text=reasoning, steps=tuple(steps))


# --- structured output values ---

def _check_cell(text: str, where: str) -> None:
    if "\n" in text:
        raise InvariantViolation(f"{where} contains a newline: {text!r}")
    if text != text.strip():
        raise InvariantViolation(f"{where} is not trimmed: {text!r}")


def _check_name(text: str, where: str, forbidden: str) -> None:
    _check_cell(text, where)
    if not text:
        raise InvariantViolation(f"{where} is empty")
    for ch in forbidden:
        if ch in text:
            raise InvariantViolation(f"{where} contains {ch!r}: {text!r}")


@dataclass(frozen=True)
class Table:
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.header:
            raise InvariantViolation("table header is empty")
        for name in self.header:
            _check_name(name, "header cell", "")
        for i, row in enumerate(self.rows):
            if len(row) != len(self.header):
                raise InvariantViolation(
                    f"row {i + 1} has {len(row)} cells, header has {len(self.header)}"
                )
            for cell in row:
                _check_cell(cell, f"cell in row {i + 1}")


@dataclass(frozen=True)
class Graph:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str, str], ...]

    def __post_init__(self):
        if not self.nodes and not self.edges:
            raise InvariantViolation("graph has no nodes and no edges")
        seen = set()
        for name in self.nodes:
            _check_name(name, "node name", "()")
            if name in seen:
                raise InvariantViolation(f"duplicate node: {name!r}")
            seen.add(name)
        for src, rel, dst in self.edges:
            _check_name(rel, "relation", "[]")
            for endpoint in (src, dst):
                if endpoint not in seen:
                    raise InvariantViolation(f"edge references undeclared node: {endpoint!r}")


@dataclass(frozen=True)
class Chunk:
    text: str
    doc_id: str | None = None

    def __post_init__(self):
        _check_cell(self.text, "chunk text")
        if not self.text:
            raise InvariantViolation("chunk text is empty")
        if " @doc:" in self.text:
            raise InvariantViolation("chunk text contains the provenance marker ' @doc:'")
        if self.doc_id is not None:
            if not self.doc_id or any(c.isspace() for c in self.doc_id):
                raise InvariantViolation(f"bad doc id: {self.doc_id!r}")


@dataclass(frozen=True)
class Chunks:
    items: tuple[Chunk, ...]
    explicitly_empty: bool = False

    def __post_init__(self):
        if not self.items and not self.explicitly_empty:
            raise InvariantViolation("chunk list empty without the explicit empty flag")
        if self.items and self.explicitly_empty:
            raise InvariantViolation("non-empty chunk list flagged empty")


@dataclass(frozen=True)
class StructuredOutput:
    """A structured output of exactly one kind.

    Construct through ``from_table`` / ``from_graph`` / ``from_chunks``,
    which validate and canonicalize; the raw constructor enforces that
    exactly the field matching ``kind`` is populated.
    """

    kind: StructureKind
    table: Table | None = None
    graph: Graph | None = None
    chunks: Chunks | None = None

    def __post_init__(self):
        populated = {
            StructureKind.TABLE: self.table,
            StructureKind.GRAPH: self.graph,
            StructureKind.CHUNKS: self.chunks,
        }
        for kind, value in populated.items():
            if (value is not None) != (kind == self.kind):
                raise InvariantViolation(
                    f"kind is {self.kind.render()} but {kind.value} field "
                    f"{'missing' if value is None else 'populated'}"
                )

    @classmethod
    def from_table(cls, header, rows) -> "StructuredOutput":
        table = Table(header=tuple(header), rows=tuple(tuple(r) for r in rows))
        return cls(kind=StructureKind.TABLE, table=table)

    @classmethod
    def from_graph(cls, edges, nodes=None) -> "StructuredOutput":
        """Build a graph output.

        With ``nodes=None`` the node set is inferred from edge endpoints in
        encounter order. An explicit node list must cover every endpoint
        (dangling edges are rejected) and is canonicalized to endpoint
        order followed by isolated nodes.
        """
        edges = tuple((str(s), str(r), str(d)) for s, r, d in edges)
        endpoint_order: list[str] = []
        for src, _, dst in edges:
            for endpoint in (src, dst):
                if endpoint not in endpoint_order:
                    endpoint_order.append(endpoint)
        if nodes is None:
            ordered = endpoint_order
        else:
            given = list(dict.fromkeys(nodes))
            missing = [e for e in endpoint_order if e not in given]
            if missing:
                raise InvariantViolation(f"dangling edge endpoints: {missing}")
            ordered = endpoint_order + [n for n in given if n not in endpoint_order]
        return cls(kind=StructureKind.GRAPH, graph=Graph(nodes=tuple(ordered), edges=edges))

    @classmethod
    def from_chunks(cls, items, explicitly_empty: bool = False) -> "StructuredOutput":
        parsed = []
        for item in items:
            if isinstance(item, Chunk):
                parsed.append(item)
            elif isinstance(item, tuple):
                parsed.append(Chunk(text=item[0], doc_id=item[1]))
            else:
                parsed.append(Chunk(text=item))
        return cls(
            kind=StructureKind.CHUNKS,
            chunks=Chunks(items=tuple(parsed), explicitly_empty=explicitly_empty),
        )

    def is_empty(self) -> bool:
        """True when the output carries no content at all."""
        if self.kind is StructureKind.TABLE:
            return not self.table.rows
        if self.kind is StructureKind.GRAPH:
            return not self.graph.nodes and not self.graph.edges
        return not self.chunks.items


# --- canonical serialization ---

_CELL_ESCAPES = {"\\": "\\\\", "|": "\\|"}
_EMPTY_CHUNKS_MARKER = "[empty]"


def _escape_cell(cell: str) -> str:
    out = []
    for ch in cell:
        out.append(_CELL_ESCAPES.get(ch, ch))
    return "".join(out)


def _split_row(line: str, line_no: int) -> list[str]:
    """Split one ``| a | b |`` line into trimmed, unescaped cells."""
    if not line.startswith("|"):
        raise ParseError("table row must start with '|'", line_no, 1)
    cells: list[str] = []
    buf: list[str] = []
    i = 1
    closed = False
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line) and line[i + 1] in ("\\", "|"):
            buf.append(line[i + 1])
            i += 2
            continue
        if ch == "|":
            cells.append("".join(buf).strip())
            buf = []
            if i == len(line) - 1:
                closed = True
            i += 1
            continue
        buf.append(ch)
        i += 1
    if not closed or buf:
        raise ParseError("table row must end with '|'", line_no, len(line))
    return cells


_EDGE_RE = re.compile(r"^\((?P<src>[^()]*)\) -\[(?P<rel>[^\[\]]*)\]-> \((?P<dst>[^()]*)\)$")
_NODE_RE = re.compile(r"^\((?P<name>[^()]*)\)$")
_CHUNK_RE = re.compile(r"^\[(?P<idx>\d+)\] (?P<body>.*)$")
_CHUNK_DOC_RE = re.compile(r"^(?P<text>.*) @doc:(?P<doc>\S+)$")


def _looks_like(text: str) -> StructureKind | None:
    """Heuristic kind of a serialized body, from its first non-blank line."""
    for line in text.split("\n"):
        line = line.strip()
        if not line:
            continue
        if line.startswith("|"):
            return StructureKind.TABLE
        if line.startswith("("):
            return StructureKind.GRAPH
        if line.startswith("["):
            return StructureKind.CHUNKS
        return None
    return None


def parse_structured_output(answer: str, kind: StructureKind) -> StructuredOutput:
    """Parse canonical serialized text into a StructuredOutput.

    Strict: ragged tables, malformed edge or chunk lines, and out-of-order
    chunk indices raise ParseError with the offending line/column. Content
    whose shape matches a different kind raises KindMismatch.
    """
    looks = _looks_like(answer)
    if looks is not None and looks is not kind:
        raise KindMismatch(
            f"content looks like {looks.render()} but {kind.render()} was expected"
        )
    lines = [(i + 1, ln) for i, ln in enumerate(answer.split("\n")) if ln.strip()]
    if kind is StructureKind.TABLE:
        return _parse_table(lines)
    if kind is StructureKind.GRAPH:
        return _parse_graph(lines)
    return _parse_chunks(lines)


def _parse_table(lines) -> StructuredOutput:
    if not lines:
        raise ParseError("empty table text", 1, 1)
    rows = []
    for line_no, line in lines:
        rows.append((line_no, _split_row(line.strip(), line_no)))
    header = rows[0][1]
    if any(not cell for cell in header):
        raise ParseError("header cell is empty", rows[0][0], 1)
    body = []
    for line_no, cells in rows[1:]:
        if len(cells) != len(header):
            raise ParseError(
                f"ragged row: {len(cells)} cells, header has {len(header)}",
                line_no,
                1,
            )
        body.append(cells)
    return StructuredOutput.from_table(header, body)


def _parse_graph(lines) -> StructuredOutput:
    if not lines:
        raise ParseError("empty graph text", 1, 1)
    edges: list[tuple[str, str, str]] = []
    isolated: list[str] = []
    for line_no, line in lines:
        line = line.strip()
        m = _EDGE_RE.match(line)
        if m:
            src, rel, dst = m.group("src").strip(), m.group("rel").strip(), m.group("dst").strip()
            if not src or not rel or not dst:
                raise ParseError("edge has an empty endpoint or relation", line_no, 1)
            edges.append((src, rel, dst))
            continue
        m = _NODE_RE.match(line)
        if m:
            name = m.group("name").strip()
            if not name:
                raise ParseError("node name is empty", line_no, 1)
            isolated.append(name)
            continue
        raise ParseError(f"not an edge or node line: {line!r}", line_no, 1)
    ordered_endpoints: list[str] = []
    for src, _, dst in edges:
        for endpoint in (src, dst):
            if endpoint not in ordered_endpoints:
                ordered_endpoints.append(endpoint)
    extra = [n for n in isolated if n not in ordered_endpoints]
    nodes = ordered_endpoints + extra if extra else None
    return StructuredOutput.from_graph(edges, nodes=nodes)


def _parse_chunks(lines) -> StructuredOutput:
    if not lines:
        raise ParseError("empty chunks text", 1, 1)
    if len(lines) == 1 and lines[0][1].strip() == _EMPTY_CHUNKS_MARKER:
        return StructuredOutput.from_chunks([], explicitly_empty=True)
    items: list[Chunk] = []
    for expected, (line_no, line) in enumerate(lines, start=1):
        m = _CHUNK_RE.match(line.strip())
        if not m:
            raise ParseError(f"not a chunk line: {line!r}", line_no, 1)
        if int(m.group("idx")) != expected:
            raise ParseError(
                f"chunk index {m.group('idx')} out of order, expected {expected}",
                line_no,
                2,
            )
        body = m.group("body")
        doc = _CHUNK_DOC_RE.match(body)
        text, doc_id = (doc.group("text").strip(), doc.group("doc")) if doc else (body.strip(), None)
        if not text:
            raise ParseError("chunk text is empty", line_no, 1)
        if " @doc:" in text:
            raise ParseError("chunk text contains a stray provenance marker", line_no, 1)
        items.append(Chunk(text=text, doc_id=doc_id))
    return StructuredOutput.from_chunks(items)


def serialize_structured_output(s: StructuredOutput) -> str:
    """Render the canonical, byte-deterministic serialization of ``s``."""
    if s.kind is StructureKind.TABLE:
        all_rows = [s.table.header, *s.table.rows]
        return "\n".join(
            "| " + " | ".join(_escape_cell(c) for c in row) + " |" for row in all_rows
        )
    if s.kind is StructureKind.GRAPH:
        lines = [f"({src}) -[{rel}]-> ({dst})" for src, rel, dst in s.graph.edges]
        in_edges = {e for edge in s.graph.edges for e in (edge[0], edge[2])}
        lines.extend(f"({n})" for n in s.graph.nodes if n not in in_edges)
        return "\n".join(lines)
    if not s.chunks.items:
        return _EMPTY_CHUNKS_MARKER
    lines = []
    for i, chunk in enumerate(s.chunks.items, start=1):
        suffix = f" @doc:{chunk.doc_id}" if chunk.doc_id is not None else ""
        lines.append(f"[{i}] {chunk.text}{suffix}")
    return "\n".join(lines)


# --- schemas and validation ---

@dataclass(frozen=True)
class Schema:
    """Question-conditioned attribute list for one structure kind."""

    kind: StructureKind
    attributes: tuple[str, ...]
    question_id: str = ""

    def __post_init__(self):
        if not self.attributes:
            raise InvariantViolation("schema has no attributes")
        seen = set()
        for attr in self.attributes:
            if not attr or not attr.strip():
                raise InvariantViolation("schema attribute is empty")
            if attr in seen:
                raise InvariantViolation(f"duplicate schema attribute: {attr!r}")
            seen.add(attr)


@dataclass(frozen=True)
class ValidationReport:
    """Rule-based schema check results for one structured output."""

    aligned: bool
    missing_attributes: tuple[str, ...] = ()
    extra_attributes: tuple[str, ...] = ()
    empty_cell_count: int = 0
    row_count: int = 0

    def to_record(self) -> dict:
        return {
            "aligned": self.aligned,
            "missing_attributes": list(self.missing_attributes),
            "extra_attributes": list(self.extra_attributes),
            "empty_cell_count": self.empty_cell_count,
            "row_count": self.row_count,
        }


def validate_against_schema(s: StructuredOutput, schema: Schema) -> ValidationReport:
    """Check a structured output against a schema of the same kind.

    Tables compare header cells to schema attributes (as sets). Graphs
    compare node names to schema attributes but tolerate extra nodes,
    since extraction legitimately discovers entities beyond the schema.
    Chunks have no attribute structure to check.
    """
    if s.kind is not schema.kind:
        raise KindMismatch(
            f"schema kind {schema.kind.render()} vs output kind {s.kind.render()}"
        )
    want = set(schema.attributes)
    if s.kind is StructureKind.TABLE:
        have = set(s.table.header)
        missing = tuple(a for a in schema.attributes if a not in have)
        extra = tuple(h for h in s.table.header if h not in want)
        empties = sum(1 for row in s.table.rows for cell in row if not cell)
        return ValidationReport(
            aligned=not missing and not extra,
            missing_attributes=missing,
            extra_attributes=extra,
            empty_cell_count=empties,
            row_count=len(s.table.rows),
        )
    if s.kind is StructureKind.GRAPH:
        have = set(s.graph.nodes)
        missing = tuple(a for a in schema.attributes if a not in have)
        return ValidationReport(
            aligned=not missing,
            missing_attributes=missing,
            row_count=len(s.graph.edges),
        )
    return ValidationReport(aligned=True, row_count=len(s.chunks.items))
