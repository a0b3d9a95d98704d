"""Training-sample templating, record persistence, and corpus statistics.

Records persist as line-delimited canonical JSON: one record per line,
UTF-8, keys sorted, no insignificant whitespace. Canonical form makes
write -> read -> write byte-stable, which the golden pipeline runs rely
on. Every record carries a format version field, currently "1".
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvariantViolation, RecordError, SchemaVersionMismatch
from .pipeline import CuratedSample, render_documents
from .structures import (
    StructureKind,
    extract_tagged_sections,
    parse_structured_output,
    serialize_structured_output,
)

FORMAT_VERSION = "1"

_TAG_TOKENS = ("<reasoning>", "</reasoning>", "<answer>", "</answer>")


def canonical_json(record: dict) -> str:
    """Deterministic single-line JSON for a record."""
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True)
class TrainingSample:
    """One (instruction, document) -> tagged target pair."""

    instruction: str
    document: str
    target: str
    meta: dict

    def __post_init__(self):
        tagged = extract_tagged_sections(self.target)  # raises if malformed
        parse_structured_output(tagged.answer, StructureKind(self.meta["structure_kind"]))

    def to_record(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "instruction": self.instruction,
            "document": self.document,
            "target": self.target,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_record(cls, data: dict) -> "TrainingSample":
        return cls(
            instruction=data["instruction"],
            document=data["document"],
            target=data["target"],
            meta=dict(data["meta"]),
        )


def build_training_sample(curated: CuratedSample) -> TrainingSample:
    """Render a curated sample into the tagged training template.

    The target wraps the trace in reasoning tags and the canonical
    serialization of the structure in answer tags. Failed samples are
    rendered too, with meta.kept false, rather than dropped.
    """
    raw = curated.trace.raw_text
    if any(tok in raw for tok in _TAG_TOKENS):
        raise InvariantViolation("trace text contains tag tokens")
    target = (
        "<reasoning>" + raw + "</reasoning>\n"
        "<answer>" + serialize_structured_output(curated.structure) + "</answer>"
    )
    return TrainingSample(
        instruction=curated.qa.question,
        document=render_documents(curated.qa.documents),
        target=target,
        meta={
            "structure_kind": curated.structure.kind.value,
            "task_category": curated.qa.task_category,
            "kept": curated.kept,
            "iterations_used": 0 if curated.refinement is None else curated.refinement.iterations_used,
            "domain_tag": curated.qa.domain_tag,
        },
    )


def write_records(path: Path | str, records: Iterable[dict]) -> int:
    """Write canonical-form records, one per line; returns the count."""
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            if "version" not in record:
                record = {**record, "version": FORMAT_VERSION}
            fh.write(canonical_json(record))
            fh.write("\n")
            count += 1
    return count


def read_records(path: Path | str, lenient: bool = False) -> list[dict]:
    """Read record lines back into dicts.

    Strict mode raises RecordError naming the first bad line. Lenient mode
    skips undecodable lines and keeps the rest. A record whose version
    field is not "1" raises SchemaVersionMismatch either way.
    """
    path = Path(path)
    records: list[dict] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("record is not an object")
            except ValueError as exc:
                if lenient:
                    continue
                raise RecordError(f"undecodable record: {exc}", line=line_no) from exc
            version = record.get("version")
            if version != FORMAT_VERSION:
                raise SchemaVersionMismatch(
                    f"line {line_no}: record version {version!r}, expected {FORMAT_VERSION!r}"
                )
            records.append(record)
    return records


def filter_verified(records: Sequence[dict]) -> tuple[list[dict], list[dict]]:
    """Split records into (kept_for_sft, all_for_grpo).

    Kept records passed verification; every record, kept or not, remains
    available for reward-based training.
    """
    kept = [r for r in records if _kept(r)]
    return kept, list(records)


def _kept(record: dict) -> bool:
    if "meta" in record:
        return bool(record["meta"].get("kept"))
    return bool(record.get("kept"))


def _kind_of(record: dict) -> str | None:
    if "meta" in record:
        return record["meta"].get("structure_kind")
    return record.get("kind")


def _category_of(record: dict) -> str | None:
    if "meta" in record:
        return record["meta"].get("task_category")
    return record.get("qa", {}).get("task_category")


@dataclass(frozen=True)
class CorpusStats:
    kind_counts: dict
    category_counts: dict
    total: int
    kept: int

    @property
    def kept_ratio(self) -> float:
        return self.kept / self.total if self.total else 0.0

    def to_record(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "kind_counts": dict(self.kind_counts),
            "category_counts": dict(self.category_counts),
            "total": self.total,
            "kept": self.kept,
            "kept_ratio": self.kept_ratio,
        }


def corpus_stats(records: Sequence[dict]) -> CorpusStats:
    """Exact counts per structure kind and task category."""
    kinds = Counter()
    categories = Counter()
    kept = 0
    for record in records:
        kind = _kind_of(record)
        if kind:
            kinds[kind] += 1
        category = _category_of(record)
        if category:
            categories[category] += 1
        if _kept(record):
            kept += 1
    base = {k.value: 0 for k in StructureKind}
    base.update(kinds)
    return CorpusStats(
        kind_counts=base,
        category_counts=dict(sorted(categories.items())),
        total=len(records),
        kept=kept,
    )


def seeded_shuffle(records: Sequence, seed: int) -> list:
    """Deterministic shuffle; the only splitting utility this module offers."""
    out = list(records)
    random.Random(seed).shuffle(out)
    return out
