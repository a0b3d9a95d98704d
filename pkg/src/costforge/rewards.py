"""Reward computation for grouped rollout scoring.

Three reward components per rollout:

* format: 0, 0.5, or 1.0 for tag and step-label discipline,
* answer: a weighted blend of rule-based structural alignment and an
  LLM-judged semantic score, scaled to [0, 1], zero for empty answers,
* process: the fraction of reference reasoning steps whose predicted
  counterpart an LLM judges consistent, scaled per trajectory by a
  coefficient that is positive for correct answers, negative for incorrect
  or overthought ones, and 1 when the format was broken.

Total reward is the sum of the three. On top of per-rollout rewards the
module computes group-relative advantages (population statistics) and the
clipped surrogate objective value used for policy optimization. Everything
except the two judge-backed scores is pure and reentrant.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Sequence

from .errors import (
    DomainError,
    GroupTooSmall,
    JudgeUnparseable,
    KindMismatch,
    MalformedTags,
    ParseError,
    ScoreOutOfRange,
)
from .gateway import BackendRef
from .structures import (
    ReasoningTrace,
    StructureKind,
    StructuredOutput,
    extract_tagged_sections,
    parse_steps,
    parse_structured_output,
)


@dataclass(frozen=True)
class RewardConfig:
    """Weights, thresholds and clipping parameters for the reward stack."""

    alpha: float = 0.3
    epsilon: float = 0.2
    beta: float = 0.0
    gamma_correct: float = 1.0
    gamma_incorrect: float = -1.0
    gamma_format_error: float = 1.0
    correct_threshold: float = 0.9
    overthink_step_cap: int = 12
    std_floor: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError("alpha must be in [0, 1]")
        if self.epsilon <= 0:
            raise DomainError("epsilon must be > 0")
        if self.beta < 0:
            raise DomainError("beta must be >= 0")
        if self.gamma_correct <= 0:
            raise DomainError("gamma_correct must be > 0")
        if self.gamma_incorrect >= 0:
            raise DomainError("gamma_incorrect must be < 0")
        if not 0.0 <= self.correct_threshold <= 1.0:
            raise DomainError("correct_threshold must be in [0, 1]")
        if self.overthink_step_cap < 1:
            raise DomainError("overthink_step_cap must be >= 1")
        if self.std_floor <= 0:
            raise DomainError("std_floor must be > 0")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "beta": self.beta,
            "gamma_correct": self.gamma_correct,
            "gamma_incorrect": self.gamma_incorrect,
            "gamma_format_error": self.gamma_format_error,
            "correct_threshold": self.correct_threshold,
            "overthink_step_cap": self.overthink_step_cap,
            "std_floor": self.std_floor,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RewardConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True)
class RewardBreakdown:
    """All components of one rollout's reward."""

    format: float
    s_struct: float
    s_sem: float
    answer: float
    answer_empty: bool
    process_raw: float
    gamma: float
    process_scaled: float
    total: float

    def to_record(self) -> dict:
        return {
            "format": self.format,
            "s_struct": self.s_struct,
            "s_sem": self.s_sem,
            "answer": self.answer,
            "answer_empty": self.answer_empty,
            "process_raw": self.process_raw,
            "gamma": self.gamma,
            "process_scaled": self.process_scaled,
            "total": self.total,
        }

    @classmethod
    def from_record(cls, data: dict) -> "RewardBreakdown":
        return cls(**{f: data[f] for f in cls.__dataclass_fields__})


@dataclass(frozen=True)
class GroupRollout:
    """Per-output rewards for one group, with optional ratio/KL inputs."""

    rewards: tuple[float, ...]
    ratios: tuple[float, ...] | None = None
    kl: tuple[float, ...] | None = None

    def __post_init__(self):
        n = len(self.rewards)
        if n < 1:
            raise DomainError("group must contain at least one reward")
        for name, values in (("ratios", self.ratios), ("kl", self.kl)):
            if values is not None and len(values) != n:
                raise DomainError(f"{name} length {len(values)} != group size {n}")
        if self.kl is not None and any(v < 0 for v in self.kl):
            raise DomainError("kl terms must be >= 0")


# --- judge reply parsing ---

def parse_binary_reply(text: str, positive: str, negative: str) -> bool:
    """Find exactly one of two decision words in a judge reply."""
    pos = re.search(rf"\b{re.escape(positive)}\b", text, re.IGNORECASE)
    neg = re.search(rf"\b{re.escape(negative)}\b", text, re.IGNORECASE)
    if bool(pos) == bool(neg):
        raise JudgeUnparseable(f"expected {positive} or {negative}, got {text[:80]!r}")
    return bool(pos)


def parse_score_reply(text: str) -> int:
    """Parse a ``Score: <int>`` judge reply into an integer in [0, 100]."""
    m = re.search(r"score\s*:\s*(-?\d+)", text, re.IGNORECASE)
    if m is None:
        stripped = text.strip()
        if re.fullmatch(r"-?\d+", stripped):
            m = re.fullmatch(r"(-?\d+)", stripped)
    if m is None:
        raise JudgeUnparseable(f"no score in judge reply: {text[:80]!r}")
    value = int(m.group(1))
    if not 0 <= value <= 100:
        raise ScoreOutOfRange(f"score {value} outside [0, 100]")
    return value


# --- component rewards ---

def format_reward(raw_output: str) -> float:
    """Hierarchical format compliance score in {0, 0.5, 1.0}.

    0 when the reasoning/answer tag pair is malformed, duplicated, or
    surrounded by non-whitespace text. 0.5 for a clean pair without step
    labels. 1.0 when the reasoning additionally carries step labels
    numbered 1..N in order. Total: every input maps to exactly one value.
    """
    try:
        tagged = extract_tagged_sections(raw_output)
    except MalformedTags:
        return 0.0
    if tagged.extraneous.strip():
        return 0.0
    trace = parse_steps(tagged.reasoning)
    if trace.monotonic:
        return 1.0
    return 0.5


def _set_f1(pred: set, ref: set) -> float:
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    overlap = len(pred & ref)
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def _count_ratio(a: int, b: int) -> float:
    if a == 0 and b == 0:
        return 1.0
    return min(a, b) / max(a, b)


def structural_score(pred: StructuredOutput, ref: StructuredOutput) -> float:
    """Rule-based structural alignment in [0, 100].

    Tables blend header-set F1 with a row-count ratio; graphs blend node-
    and edge-set F1; chunks compare counts. A kind mismatch scores 0, as
    does an empty prediction against a non-empty reference.
    """
    if pred.kind is not ref.kind:
        return 0.0
    if pred.is_empty() or ref.is_empty():
        return 100.0 if pred.is_empty() == ref.is_empty() else 0.0
    if pred.kind is StructureKind.TABLE:
        header_f1 = _set_f1(set(pred.table.header), set(ref.table.header))
        rows = _count_ratio(len(pred.table.rows), len(ref.table.rows))
        return 100.0 * (0.5 * header_f1 + 0.5 * rows)
    if pred.kind is StructureKind.GRAPH:
        node_f1 = _set_f1(set(pred.graph.nodes), set(ref.graph.nodes))
        edge_f1 = _set_f1(set(pred.graph.edges), set(ref.graph.edges))
        return 100.0 * (0.5 * node_f1 + 0.5 * edge_f1)
    return 100.0 * _count_ratio(len(pred.chunks.items), len(ref.chunks.items))


def semantic_score(pred_answer: str, ref: str, judge: BackendRef) -> int:
    """LLM-judged semantic similarity in [0, 100].

    Identical texts short-circuit to 100 without a judge call.
    """
    if pred_answer == ref:
        return 100
    reply = judge.complete_text(
        "semantic_score", {"reference": ref, "candidate": pred_answer}
    )
    return parse_score_reply(reply)


def answer_reward(s_struct: float, s_sem: float, alpha: float, is_empty: bool) -> float:
    """Blend structural and semantic scores into [0, 1]; empty answers score 0."""
    for name, value in (("s_struct", s_struct), ("s_sem", s_sem)):
        if not 0.0 <= value <= 100.0:
            raise DomainError(f"{name} must be in [0, 100], got {value}")
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must be in [0, 1], got {alpha}")
    if is_empty:
        return 0.0
    return (alpha * s_struct + (1.0 - alpha) * s_sem) / 100.0


@dataclass(frozen=True)
class StepConsistency:
    """One reference step's consistency outcome."""

    index: int
    outcome: str  # consistent | inconsistent | missing | unparseable


def process_reward_detail(
    pred_steps: ReasoningTrace, ref_steps: ReasoningTrace, judge: BackendRef
) -> tuple[float, tuple[StepConsistency, ...]]:
    """Per-step consistency against reference steps, with flags.

    Each reference step is judged once against the predicted step at the
    same position; a missing predicted step counts inconsistent without a
    call, and an unparseable judge reply counts the step 0 and flags it.
    Returns (k/N, flags) where k is the number of consistent steps.
    """
    n = len(ref_steps.steps)
    if n < 1:
        raise DomainError("reference trace must contain at least one step")
    flags: list[StepConsistency] = []
    consistent = 0
    for i, ref_step in enumerate(ref_steps.steps):
        if i >= len(pred_steps.steps):
            flags.append(StepConsistency(index=i + 1, outcome="missing"))
            continue
        reply = judge.complete_text(
            "consistency_check",
            {
                "reference_step": ref_step.body,
                "predicted_step": pred_steps.steps[i].body,
            },
        )
        try:
            ok = parse_binary_reply(reply, positive="CONSISTENT", negative="INCONSISTENT")
        except JudgeUnparseable:
            flags.append(StepConsistency(index=i + 1, outcome="unparseable"))
            continue
        if ok:
            consistent += 1
        flags.append(StepConsistency(index=i + 1, outcome="consistent" if ok else "inconsistent"))
    return consistent / n, tuple(flags)


def process_reward(pred_steps: ReasoningTrace, ref_steps: ReasoningTrace, judge: BackendRef) -> float:
    value, _ = process_reward_detail(pred_steps, ref_steps, judge)
    return value


def trajectory_coefficient(
    answer_reward_value: float, format_score: float, step_count: int, cfg: RewardConfig
) -> float:
    """Trajectory-level scaling for the process reward.

    Format errors isolate penalties: the coefficient is pinned to 1.
    Otherwise correct, not-overthought trajectories get the positive
    coefficient and everything else the negative one.
    """
    if format_score < 0.5:
        return cfg.gamma_format_error
    if answer_reward_value >= cfg.correct_threshold and step_count <= cfg.overthink_step_cap:
        return cfg.gamma_correct
    return cfg.gamma_incorrect


def overall_reward(
    format_score: float,
    s_struct: float,
    s_sem: float,
    answer_empty: bool,
    process_raw: float,
    gamma: float,
    alpha: float,
) -> RewardBreakdown:
    """Assemble the full breakdown; total = format + answer + process*gamma."""
    if not 0.0 <= process_raw <= 1.0:
        raise DomainError(f"process_raw must be in [0, 1], got {process_raw}")
    answer = answer_reward(s_struct, s_sem, alpha, answer_empty)
    process_scaled = process_raw * gamma
    return RewardBreakdown(
        format=format_score,
        s_struct=s_struct,
        s_sem=s_sem,
        answer=answer,
        answer_empty=answer_empty,
        process_raw=process_raw,
        gamma=gamma,
        process_scaled=process_scaled,
        total=format_score + answer + process_scaled,
    )


# --- group statistics ---

def group_advantages(rewards: Sequence[float], std_floor: float = 1e-8) -> list[float]:
    """Group-relative advantages: (r - mean) / population std.

    Groups whose population std falls below ``std_floor`` are degenerate
    and yield all-zero advantages.
    """
    n = len(rewards)
    if n < 2:
        raise GroupTooSmall(f"advantages need a group of >= 2, got {n}")
    mean = math.fsum(rewards) / n
    variance = math.fsum((r - mean) ** 2 for r in rewards) / n
    std = math.sqrt(variance)
    if std < std_floor:
        return [0.0] * n
    return [(r - mean) / std for r in rewards]


def grpo_surrogate(
    group: GroupRollout, advantages: Sequence[float], cfg: RewardConfig
) -> float:
    """Clipped-surrogate objective value over one group.

    mean_i[ min(ratio_i * A_i, clip(ratio_i, 1-eps, 1+eps) * A_i) - beta * kl_i ]
    """
    if group.ratios is None:
        raise DomainError("surrogate needs importance ratios")
    if len(advantages) != len(group.ratios):
        raise DomainError("advantages length != group size")
    kl = group.kl if group.kl is not None else (0.0,) * len(group.ratios)
    total = 0.0
    for ratio, adv, kl_i in zip(group.ratios, advantages, kl):
        if ratio <= 0:
            raise DomainError(f"importance ratio must be > 0, got {ratio}")
        clipped = min(max(ratio, 1.0 - cfg.epsilon), 1.0 + cfg.epsilon)
        total += min(ratio * adv, clipped * adv) - cfg.beta * kl_i
    return total / len(group.ratios)


# --- full rollout scoring ---

@dataclass(frozen=True)
class AuditEntry:
    """One judge call made while scoring a rollout."""

    label: str
    call_id: str


class _AuditingJudge:
    """Wraps a judge backend and records a deterministic id per call."""

    def __init__(self, judge: BackendRef):
        self._judge = judge
        self.entries: list[AuditEntry] = []
        self._counter = 0

    def complete_text(self, template_id: str, bindings, **kwargs) -> str:
        prompt = self._judge.render(template_id, bindings)
        call_id = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]
        self._counter += 1
        self.entries.append(AuditEntry(label=f"{template_id}:{self._counter}", call_id=call_id))
        return self._judge.complete_text(template_id, bindings, **kwargs)


def score_rollout(
    rollout: str,
    reference_target: str,
    kind: StructureKind,
    judge: BackendRef,
    cfg: RewardConfig,
) -> tuple[RewardBreakdown, tuple[AuditEntry, ...]]:
    """Score one raw rollout against a tagged reference target.

    Total over arbitrary rollout text: missing or malformed tags yield an
    empty answer and zero steps rather than an error. The reference target
    must itself be well-formed; that is the caller's contract.
    """
    ref = extract_tagged_sections(reference_target)
    ref_structure = parse_structured_output(ref.answer, kind)
    ref_trace = parse_steps(ref.reasoning)

    fmt = format_reward(rollout)
    try:
        pred = extract_tagged_sections(rollout)
        pred_answer, pred_reasoning = pred.answer, pred.reasoning
    except MalformedTags:
        pred_answer, pred_reasoning = "", ""

    audit = _AuditingJudge(judge)
    answer_empty = not pred_answer.strip()
    s_struct = 0.0
    s_sem = 0.0
    if not answer_empty:
        try:
            pred_structure = parse_structured_output(pred_answer, kind)
            s_struct = structural_score(pred_structure, ref_structure)
        except (ParseError, KindMismatch):
            s_struct = 0.0
        s_sem = float(semantic_score(pred_answer, ref.answer, audit))

    pred_trace = parse_steps(pred_reasoning)
    if ref_trace.steps:
        process_raw, _ = process_reward_detail(pred_trace, ref_trace, audit)
    else:
        process_raw = 0.0

    answer = answer_reward(s_struct, s_sem, cfg.alpha, answer_empty)
    gamma = trajectory_coefficient(answer, fmt, len(pred_trace.steps), cfg)
    breakdown = overall_reward(
        format_score=fmt,
        s_struct=s_struct,
        s_sem=s_sem,
        answer_empty=answer_empty,
        process_raw=process_raw,
        gamma=gamma,
        alpha=cfg.alpha,
    )
    return breakdown, tuple(audit.entries)
