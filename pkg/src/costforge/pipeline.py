"""The curation pipeline: structure analysis, trace generation,
verification, and iterative refinement.

For each question/document sample a generator backend picks a structure
kind and a schema, emits a step-labeled reasoning trace plus a serialized
structure, and a reasoner/judge pair verifies that the structure alone can
answer the question. Failing samples go through a bounded refinement loop:
a sufficiency check decides whether the current structure suffices, and if
not the structure is regenerated conditioned on the question, the
documents, and the structure so far. The sample is kept when the final
verification passes; failed samples are still emitted, flagged, because
they remain useful as hard training material.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import (
    EmptySchema,
    GenerationRejected,
    InvariantViolation,
    JudgeUnparseable,
    KindMismatch,
    MalformedTags,
    ParseError,
    UnparseableSelection,
)
from .gateway import BackendRef
from .rewards import parse_binary_reply
from .structures import (
    ReasoningTrace,
    Schema,
    StructureKind,
    StructuredOutput,
    extract_tagged_sections,
    parse_steps,
    parse_structured_output,
    serialize_structured_output,
)

TASK_CATEGORIES = ("SpotlightLocating", "Comparison", "Clustering", "ChainOfReasoning")

DOC_SEPARATOR = "<<doc:{doc_id}>>"


@dataclass(frozen=True)
class QASample:
    """One question over one or more source documents."""

    id: str
    question: str
    documents: tuple[tuple[str, str], ...]
    gold_answer: str
    task_category: str | None = None
    domain_tag: str = ""

    def __post_init__(self):
        if not self.question.strip():
            raise InvariantViolation("question is empty")
        if not self.documents:
            raise InvariantViolation("sample has no documents")
        if self.task_category is not None and self.task_category not in TASK_CATEGORIES:
            raise InvariantViolation(f"unknown task category: {self.task_category!r}")

    def to_record(self) -> dict:
        return {
            "version": "1",
            "id": self.id,
            "question": self.question,
            "documents": [[d, t] for d, t in self.documents],
            "gold_answer": self.gold_answer,
            "task_category": self.task_category,
            "domain_tag": self.domain_tag,
        }

    @classmethod
    def from_record(cls, data: dict) -> "QASample":
        return cls(
            id=data["id"],
            question=data["question"],
            documents=tuple((d, t) for d, t in data["documents"]),
            gold_answer=data["gold_answer"],
            task_category=data.get("task_category"),
            domain_tag=data.get("domain_tag", ""),
        )


def render_documents(documents: Sequence[tuple[str, str]]) -> str:
    """Concatenate documents with ``<<doc:ID>>`` separator lines."""
    parts = []
    for doc_id, text in documents:
        parts.append(DOC_SEPARATOR.format(doc_id=doc_id))
        parts.append(text)
    return "\n".join(parts)


@dataclass(frozen=True)
class VerificationVerdict:
    passed: bool
    predicted_answer: str
    judge_raw: str

    def __post_init__(self):
        if self.passed and not self.predicted_answer.strip():
            raise InvariantViolation("verdict passed with an empty predicted answer")


@dataclass(frozen=True)
class RefinementResult:
    final_structure: StructuredOutput
    iterations_used: int
    sufficiency_history: tuple[bool, ...]
    converged: bool

    def __post_init__(self):
        if self.iterations_used < 0:
            raise InvariantViolation("iterations_used must be >= 0")
        if self.sufficiency_history:
            if self.converged != self.sufficiency_history[-1]:
                raise InvariantViolation("converged must mirror the last sufficiency check")
        elif self.converged:
            raise InvariantViolation("converged without any sufficiency check")


@dataclass(frozen=True)
class CuratedSample:
    """The pipeline's final output for one sample."""

    qa: QASample
    trace: ReasoningTrace
    structure: StructuredOutput
    schema: Schema
    verdict: VerificationVerdict
    refinement: RefinementResult | None
    kept: bool
    provenance: dict

    def __post_init__(self):
        if self.kept and not self.verdict.passed:
            raise InvariantViolation("kept sample without a passing verdict")

    def to_record(self) -> dict:
        return {
            "version": "1",
            "id": self.qa.id,
            "qa": {k: v for k, v in self.qa.to_record().items() if k != "version"},
            "kind": self.structure.kind.value,
            "schema": {
                "kind": self.schema.kind.value,
                "attributes": list(self.schema.attributes),
                "question_id": self.schema.question_id,
            },
            "trace": self.trace.raw_text,
            "structure": serialize_structured_output(self.structure),
            "verdict": {
                "passed": self.verdict.passed,
                "predicted_answer": self.verdict.predicted_answer,
                "judge_raw": self.verdict.judge_raw,
            },
            "refinement": None
            if self.refinement is None
            else {
                "iterations_used": self.refinement.iterations_used,
                "sufficiency_history": list(self.refinement.sufficiency_history),
                "converged": self.refinement.converged,
            },
            "kept": self.kept,
            "provenance": self.provenance,
        }

    @classmethod
    def from_record(cls, data: dict) -> "CuratedSample":
        qa = QASample.from_record({**data["qa"], "id": data["qa"].get("id", data["id"])})
        kind = StructureKind(data["kind"])
        structure = parse_structured_output(data["structure"], kind)
        refinement = None
        if data.get("refinement") is not None:
            r = data["refinement"]
            refinement = RefinementResult(
                final_structure=structure,
                iterations_used=r["iterations_used"],
                sufficiency_history=tuple(r["sufficiency_history"]),
                converged=r["converged"],
            )
        return cls(
            qa=qa,
            trace=parse_steps(data["trace"]),
            structure=structure,
            schema=Schema(
                kind=StructureKind(data["schema"]["kind"]),
                attributes=tuple(data["schema"]["attributes"]),
                question_id=data["schema"].get("question_id", ""),
            ),
            verdict=VerificationVerdict(
                passed=data["verdict"]["passed"],
                predicted_answer=data["verdict"]["predicted_answer"],
                judge_raw=data["verdict"]["judge_raw"],
            ),
            refinement=refinement,
            kept=data["kept"],
            provenance=data.get("provenance", {}),
        )


@dataclass(frozen=True)
class PipelineBackends:
    generator: BackendRef
    reasoner: BackendRef
    judge: BackendRef


@dataclass(frozen=True)
class PipelineConfig:
    max_refine_iters: int = 3
    parse_retries: int = 2
    workers: int = 1


# --- structure analysis ---

_KIND_KEYWORDS = (("table", StructureKind.TABLE), ("graph", StructureKind.GRAPH), ("chunk", StructureKind.CHUNKS))


def select_structure(question: str, backend: BackendRef) -> StructureKind:
    """Ask the backend which structure kind fits the question.

    The reply is scanned for the earliest kind keyword, case-insensitively,
    so both bare keywords and short sentences parse.
    """
    reply = backend.complete_text("structure_select", {"question": question})
    lowered = reply.lower()
    hits = [(lowered.find(kw), kind) for kw, kind in _KIND_KEYWORDS if kw in lowered]
    if not hits:
        raise UnparseableSelection(f"no structure kind in reply: {reply[:80]!r}")
    return min(hits, key=lambda h: h[0])[1]


def construct_schema(
    question: str, kind: StructureKind, backend: BackendRef, question_id: str = ""
) -> Schema:
    """Ask the backend for the attribute list; dedup keeps first occurrence."""
    reply = backend.complete_text(
        "schema_construct", {"question": question, "kind": kind.render()}
    )
    raw = [a.strip() for a in re.split(r"[,\n]", reply)]
    attributes = list(dict.fromkeys(a for a in raw if a))
    if not attributes:
        raise EmptySchema(f"no attributes in reply: {reply[:80]!r}")
    return Schema(kind=kind, attributes=tuple(attributes), question_id=question_id)


def render_schema(schema: Schema) -> str:
    return f"{schema.kind.render()}: {', '.join(schema.attributes)}"


# --- trace generation ---

def generate_trace(
    qa: QASample, schema: Schema, backend: BackendRef
) -> tuple[ReasoningTrace, StructuredOutput]:
    """Generate the reasoning trace and structured output in one call."""
    reply = backend.complete_text(
        "trace_generate",
        {
            "question": qa.question,
            "documents": render_documents(qa.documents),
            "schema": render_schema(schema),
        },
    )
    try:
        tagged = extract_tagged_sections(reply)
        structure = parse_structured_output(tagged.answer, schema.kind)
    except (MalformedTags, ParseError, KindMismatch) as exc:
        raise GenerationRejected(f"unusable generation: {exc}", raw_text=reply) from exc
    return parse_steps(tagged.reasoning), structure


# --- quality verification ---

def verify_quality(
    qa: QASample,
    structure: StructuredOutput,
    reasoner_backend: BackendRef,
    judge_backend: BackendRef,
) -> VerificationVerdict:
    """Answer the question from the structure alone, then judge it."""
    predicted = reasoner_backend.complete_text(
        "two_hop_reason",
        {"question": qa.question, "structure": serialize_structured_output(structure)},
    )
    judge_raw = judge_backend.complete_text(
        "verify",
        {
            "question": qa.question,
            "gold_answer": qa.gold_answer,
            "predicted_answer": predicted,
        },
    )
    passed = parse_binary_reply(judge_raw, positive="CORRECT", negative="INCORRECT")
    return VerificationVerdict(passed=passed, predicted_answer=predicted, judge_raw=judge_raw)


# --- iterative refinement ---

def _sufficient(qa: QASample, structure: StructuredOutput, judge_backend: BackendRef) -> bool:
    """Sufficiency check; any reply that is not a clear yes counts as no."""
    reply = judge_backend.complete_text(
        "sufficiency_check",
        {"question": qa.question, "current_structure": serialize_structured_output(structure)},
    )
    try:
        return parse_binary_reply(reply, positive="YES", negative="NO")
    except JudgeUnparseable:
        return False


def _regenerate(
    qa: QASample,
    current: StructuredOutput,
    backend: BackendRef,
    parse_retries: int,
) -> StructuredOutput:
    bindings = {
        "question": qa.question,
        "current_structure": serialize_structured_output(current),
        "documents": render_documents(qa.documents),
    }
    last_exc: Exception | None = None
    for _ in range(parse_retries + 1):
        reply = backend.complete_text("refine", bindings)
        try:
            return parse_structured_output(reply.strip(), current.kind)
        except (ParseError, KindMismatch) as exc:
            last_exc = exc
    raise GenerationRejected(f"refinement never parsed: {last_exc}", raw_text=reply)


def refine(
    qa: QASample,
    structure_t: StructuredOutput,
    max_iters: int,
    backend: BackendRef,
    judge_backend: BackendRef,
    parse_retries: int = 2,
) -> RefinementResult:
    """Fixed-point refinement of an insufficient structure.

    Each round first checks sufficiency; a sufficient structure is returned
    unchanged (the fixed point). Otherwise the structure is regenerated
    from the question, documents, and current structure, up to ``max_iters``
    regenerations.
    """
    if max_iters < 0:
        raise InvariantViolation("max_iters must be >= 0")
    history: list[bool] = []
    current = structure_t
    for round_no in range(max_iters):
        ok = _sufficient(qa, current, judge_backend)
        history.append(ok)
        if ok:
            return RefinementResult(
                final_structure=current,
                iterations_used=round_no,
                sufficiency_history=tuple(history),
                converged=True,
            )
        current = _regenerate(qa, current, backend, parse_retries)
    return RefinementResult(
        final_structure=current,
        iterations_used=max_iters,
        sufficiency_history=tuple(history),
        converged=False,
    )


# --- full pipeline ---

def run_sample(
    qa: QASample, config: PipelineConfig, backends: PipelineBackends
) -> CuratedSample:
    """Run selection, schema construction, generation, verification, and
    refinement for one sample; never mutates ``qa``.

    Verification failures route through refinement and are re-verified on
    the same path, so "kept" has a single definition: the final verdict
    passed.
    """
    kind = select_structure(qa.question, backends.generator)
    schema = construct_schema(qa.question, kind, backends.generator, question_id=qa.id)
    trace, structure = generate_trace(qa, schema, backends.generator)
    verdict = verify_quality(qa, structure, backends.reasoner, backends.judge)
    refinement = None
    if not verdict.passed:
        refinement = refine(
            qa,
            structure,
            config.max_refine_iters,
            backends.generator,
            backends.judge,
            parse_retries=config.parse_retries,
        )
        structure = refinement.final_structure
        verdict = verify_quality(qa, structure, backends.reasoner, backends.judge)
    provenance = {
        "generator": backends.generator.tag,
        "reasoner": backends.reasoner.tag,
        "judge": backends.judge.tag,
        "templates": backends.generator.gateway.templates.versions(),
    }
    return CuratedSample(
        qa=qa,
        trace=trace,
        structure=structure,
        schema=schema,
        verdict=verdict,
        refinement=refinement,
        kept=verdict.passed,
        provenance=provenance,
    )


@dataclass(frozen=True)
class SampleFailure:
    qa_id: str
    error: str


def iter_batch(
    samples: Iterable[QASample], config: PipelineConfig, backends: PipelineBackends
):
    """Yield per-sample outcomes in input order regardless of completion order.

    Each outcome is a CuratedSample or a SampleFailure; a failing sample
    never stops the batch. Yielding in order lets callers flush completed
    work incrementally (for example on shutdown signals).
    """
    samples = list(samples)

    def one(qa: QASample):
        try:
            return run_sample(qa, config, backends)
        except Exception as exc:  # per-sample isolation is the contract
            return SampleFailure(qa_id=qa.id, error=f"{type(exc).__name__}: {exc}")

    if config.workers <= 1:
        for qa in samples:
            yield one(qa)
        return
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        yield from pool.map(one, samples)


def run_batch(
    samples: Iterable[QASample], config: PipelineConfig, backends: PipelineBackends
) -> tuple[list[CuratedSample], list[SampleFailure]]:
    """Process samples under a bounded worker pool; see ``iter_batch``."""
    outcomes = list(iter_batch(samples, config, backends))
    curated = [o for o in outcomes if isinstance(o, CuratedSample)]
    failures = [o for o in outcomes if isinstance(o, SampleFailure)]
    return curated, failures
