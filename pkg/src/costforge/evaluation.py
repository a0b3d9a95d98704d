"""Two-hop evaluation of structured outputs.

Hop one answers the question from the serialized structure alone (the
prompt carries no document text, which a sentinel test can assert). Hop
two grades that answer against the gold answer on a 0-100 scale. Reports
aggregate Average Score and Perfect Rate, where perfect means a score of
exactly 100, per task category and overall.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import EmptyInput, InvariantViolation
from .gateway import BackendRef
from .pipeline import QASample
from .rewards import parse_score_reply
from .structures import StructuredOutput, serialize_structured_output


@dataclass(frozen=True)
class EvalRecord:
    qa_id: str
    task_category: str | None
    predicted_answer: str
    judge_score: int
    latency_seconds: float = 0.0

    def __post_init__(self):
        if not 0 <= self.judge_score <= 100:
            raise InvariantViolation("judge_score must be in [0, 100]")
        if self.latency_seconds < 0:
            raise InvariantViolation("latency must be >= 0")

    def to_record(self) -> dict:
        return {
            "version": "1",
            "qa_id": self.qa_id,
            "task_category": self.task_category,
            "predicted_answer": self.predicted_answer,
            "judge_score": self.judge_score,
            "latency_seconds": self.latency_seconds,
        }

    @classmethod
    def from_record(cls, data: dict) -> "EvalRecord":
        return cls(
            qa_id=data["qa_id"],
            task_category=data.get("task_category"),
            predicted_answer=data["predicted_answer"],
            judge_score=data["judge_score"],
            latency_seconds=data.get("latency_seconds", 0.0),
        )


@dataclass(frozen=True)
class CategoryReport:
    average_score: float
    perfect_rate: float
    n: int


@dataclass(frozen=True)
class EvalReport:
    overall: CategoryReport
    per_category: dict
    mean_latency_seconds: float

    def to_record(self) -> dict:
        def cat(c: CategoryReport) -> dict:
            return {"average_score": c.average_score, "perfect_rate": c.perfect_rate, "n": c.n}

        return {
            "version": "1",
            "overall": cat(self.overall),
            "per_category": {k: cat(v) for k, v in self.per_category.items()},
            "mean_latency_seconds": self.mean_latency_seconds,
        }

    def summary_table(self) -> str:
        rows = [("category", "AS", "PR", "n")]
        for name, report in sorted(self.per_category.items()):
            rows.append((name, f"{report.average_score:.2f}", f"{report.perfect_rate:.2f}", str(report.n)))
        rows.append(("overall", f"{self.overall.average_score:.2f}", f"{self.overall.perfect_rate:.2f}", str(self.overall.n)))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
        lines.append(f"mean latency: {self.mean_latency_seconds:.2f}s")
        return "\n".join(lines)


def two_hop_answer(qa: QASample, structure: StructuredOutput, reasoner_backend: BackendRef) -> str:
    """Answer the question from the structure alone; no document text."""
    return reasoner_backend.complete_text(
        "two_hop_reason",
        {"question": qa.question, "structure": serialize_structured_output(structure)},
    )


def judge_score(qa: QASample, predicted: str, judge_backend: BackendRef) -> int:
    """Grade a predicted answer against the gold answer, 0-100."""
    reply = judge_backend.complete_text(
        "judge_score",
        {
            "question": qa.question,
            "gold_answer": qa.gold_answer,
            "predicted_answer": predicted,
        },
    )
    return parse_score_reply(reply)


def _summarize(records: Sequence[EvalRecord]) -> CategoryReport:
    n = len(records)
    total = sum(r.judge_score for r in records)
    perfect = sum(1 for r in records if r.judge_score == 100)
    return CategoryReport(average_score=total / n, perfect_rate=perfect / n, n=n)


def aggregate(records: Iterable[EvalRecord]) -> EvalReport:
    """Average Score and Perfect Rate, per category and overall.

    Permutation-invariant; categories absent from the records are omitted.
    """
    records = list(records)
    if not records:
        raise EmptyInput("no evaluation records")
    categories: dict[str, list[EvalRecord]] = {}
    for record in records:
        if record.task_category is not None:
            categories.setdefault(record.task_category, []).append(record)
    return EvalReport(
        overall=_summarize(records),
        per_category={name: _summarize(group) for name, group in categories.items()},
        mean_latency_seconds=sum(r.latency_seconds for r in records) / len(records),
    )


def measure_latency(
    run: Callable[[], object], clock: Callable[[], float] = time.monotonic
) -> float:
    """Wall-clock seconds for one end-to-end structure generation."""
    start = clock()
    run()
    return clock() - start


def evaluate_sample(
    qa: QASample,
    structure: StructuredOutput,
    reasoner_backend: BackendRef,
    judge_backend: BackendRef,
    latency_seconds: float = 0.0,
) -> EvalRecord:
    """Run both hops for one sample and assemble the record."""
    predicted = two_hop_answer(qa, structure, reasoner_backend)
    score = judge_score(qa, predicted, judge_backend)
    return EvalRecord(
        qa_id=qa.id,
        task_category=qa.task_category,
        predicted_answer=predicted,
        judge_score=score,
        latency_seconds=latency_seconds,
    )
