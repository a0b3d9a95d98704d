"""Structured-output trace generation, reward computation, and evaluation
for long-document QA, wired for scripted-backend determinism in tests and
real chat-completion backends in production."""

from .errors import CostForgeError
from .gateway import (
    BackendRef,
    CompletionRequest,
    CompletionResult,
    Gateway,
    HttpBackend,
    PromptTemplate,
    ScriptedBackend,
    TemplateLibrary,
    render_prompt,
)
from .pipeline import (
    CuratedSample,
    PipelineBackends,
    PipelineConfig,
    QASample,
    RefinementResult,
    VerificationVerdict,
    refine,
    run_batch,
    run_sample,
)
from .rewards import (
    GroupRollout,
    RewardBreakdown,
    RewardConfig,
    answer_reward,
    format_reward,
    group_advantages,
    grpo_surrogate,
    overall_reward,
    process_reward,
    score_rollout,
    semantic_score,
    structural_score,
    trajectory_coefficient,
)
from .structures import (
    ReasoningTrace,
    Schema,
    StructureKind,
    StructuredOutput,
    TaggedOutput,
    extract_tagged_sections,
    parse_steps,
    parse_structured_output,
    serialize_structured_output,
    validate_against_schema,
)

__version__ = "0.1.0"

__all__ = [
    "BackendRef",
    "CompletionRequest",
    "CompletionResult",
    "ReasoningTrace",
    "CostForgeError",
    "CuratedSample",
    "Gateway",
    "GroupRollout",
    "HttpBackend",
    "PipelineBackends",
    "PipelineConfig",
    "PromptTemplate",
    "QASample",
    "RefinementResult",
    "RewardBreakdown",
    "RewardConfig",
    "Schema",
    "ScriptedBackend",
    "StructureKind",
    "StructuredOutput",
    "TaggedOutput",
    "TemplateLibrary",
    "VerificationVerdict",
    "answer_reward",
    "extract_tagged_sections",
    "format_reward",
    "group_advantages",
    "grpo_surrogate",
    "overall_reward",
    "parse_steps",
    "parse_structured_output",
    "process_reward",
    "refine",
    "render_prompt",
    "run_batch",
    "run_sample",
    "score_rollout",
    "semantic_score",
    "serialize_structured_output",
    "structural_score",
    "trajectory_coefficient",
    "validate_against_schema",
]
