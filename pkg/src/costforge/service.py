"""Stateless HTTP facade over the reward engine.

Endpoints:

* ``POST /v1/reward``        -- score one rollout against its reference
* ``POST /v1/reward/batch``  -- score a list (one JSON array in, one out)
* ``POST /v1/advantages``    -- group-relative advantages for G >= 2 rewards
* ``GET  /healthz``          -- liveness plus the active reward config

Responses are byte-for-byte what the in-process engine returns; the only
state is the immutable config, whose hash is echoed on every response in
the ``X-CostForge-Config-Hash`` header so trainers can detect drift.

Status codes: 400 malformed body, 422 domain invariant violations,
503 judge backend unavailable or unusable.
"""

from __future__ import annotations

import hashlib

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .dataset import canonical_json
from .errors import (
    BackendUnavailable,
    BudgetExceeded,
    CostForgeError,
    DomainError,
    GroupTooSmall,
    InvariantViolation,
    JudgeUnparseable,
    KindMismatch,
    MalformedTags,
    ParseError,
    SchemaVersionMismatch,
    ScoreOutOfRange,
    ScriptExhausted,
)
from .gateway import BackendRef
from .rewards import RewardConfig, group_advantages, score_rollout
from .structures import StructureKind

_UNAVAILABLE = (BackendUnavailable, BudgetExceeded, ScriptExhausted, JudgeUnparseable, ScoreOutOfRange)
_INVALID = (
    MalformedTags,
    ParseError,
    KindMismatch,
    InvariantViolation,
    DomainError,
    GroupTooSmall,
    SchemaVersionMismatch,
)


class RewardRequestBody(BaseModel):
    question: str
    gold_answer: str
    reference_target: str
    rollout: str
    structure_kind: str
    group_id: str | None = None


class AdvantageRequestBody(BaseModel):
    rewards: list[float]


def config_hash(cfg: RewardConfig) -> str:
    return hashlib.sha256(canonical_json(cfg.to_dict()).encode("utf-8")).hexdigest()[:16]


def create_app(cfg: RewardConfig, judge: BackendRef) -> FastAPI:
    app = FastAPI(title="costforge reward service")
    cfg_hash = config_hash(cfg)

    def respond(payload, status_code: int = 200) -> JSONResponse:
        return JSONResponse(
            payload, status_code=status_code, headers={"X-CostForge-Config-Hash": cfg_hash}
        )

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return respond({"error": "malformed body", "detail": str(exc)}, status_code=400)

    @app.exception_handler(CostForgeError)
    async def domain_error(request: Request, exc: CostForgeError):
        if isinstance(exc, _UNAVAILABLE):
            status = 503
        elif isinstance(exc, _INVALID):
            status = 422
        else:
            status = 500
        return respond({"error": type(exc).__name__, "detail": str(exc)}, status_code=status)

    def score_one(body: RewardRequestBody) -> dict:
        try:
            kind = StructureKind(body.structure_kind)
        except ValueError as exc:
            raise KindMismatch(f"unknown structure kind: {body.structure_kind!r}") from exc
        breakdown, audit = score_rollout(
            rollout=body.rollout,
            reference_target=body.reference_target,
            kind=kind,
            judge=judge,
            cfg=cfg,
        )
        return {
            "group_id": body.group_id,
            "breakdown": breakdown.to_record(),
            "audit": [{"label": a.label, "call_id": a.call_id} for a in audit],
        }

    @app.post("/v1/reward")
    def reward(body: RewardRequestBody):
        return respond(score_one(body))

    @app.post("/v1/reward/batch")
    def reward_batch(bodies: list[RewardRequestBody]):
        return respond([score_one(body) for body in bodies])

    @app.post("/v1/advantages")
    def advantages(body: AdvantageRequestBody):
        return respond({"advantages": group_advantages(body.rewards, cfg.std_floor)})

    @app.get("/healthz")
    def healthz():
        return respond({"status": "ok", "config": cfg.to_dict(), "config_hash": cfg_hash})

    return app


def serve(app: FastAPI, bind: str = "127.0.0.1", port: int = 8400) -> None:
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(app, host=bind, port=port, log_level="warning")
