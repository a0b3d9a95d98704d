"""Operator command line.

Subcommands:
  generate       run the curation pipeline over a QA sample file
  build-dataset  render curated samples into training records plus stats
  score          compute reward breakdowns and advantages for rollout groups
  reward-serve   start the HTTP reward service
  eval           two-hop evaluation of curated records
  latency        timed generation runs

Exit codes: 0 success, 1 partial failures (details in ``<out>.failures``),
2 configuration errors. Config is a JSON file; only secrets come from the
environment (COSTFORGE_API_BASE, COSTFORGE_API_KEY, and COSTFORGE_RPM for
rate limiting).
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import (
    build_training_sample,
    canonical_json,
    corpus_stats,
    read_records,
    write_records,
)
from .errors import ConfigError, CostForgeError
from .evaluation import EvalRecord, aggregate, evaluate_sample, measure_latency
from .gateway import BackendRef, Gateway, HttpBackend, ScriptedBackend, TemplateLibrary
from .pipeline import (
    CuratedSample,
    PipelineBackends,
    PipelineConfig,
    QASample,
    SampleFailure,
    iter_batch,
    render_documents,
    render_schema,
)
from .rewards import RewardConfig, group_advantages, score_rollout
from .structures import Schema, StructureKind

ROLES = ("generator", "reasoner", "judge")


@dataclass
class AppConfig:
    seed: int = 0
    workers: int = 1
    max_refine_iters: int = 3
    parse_retries: int = 2
    rpm: float | None = None
    backends: dict = field(default_factory=dict)
    reward: RewardConfig = field(default_factory=RewardConfig)
    prompt_dir: str | None = None

    @classmethod
    def load(cls, path: str | None) -> "AppConfig":
        data = {}
        if path:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
        rpm_env = os.environ.get("COSTFORGE_RPM")
        return cls(
            seed=data.get("seed", 0),
            workers=data.get("workers", 1),
            max_refine_iters=data.get("max_refine_iters", 3),
            parse_retries=data.get("parse_retries", 2),
            rpm=float(rpm_env) if rpm_env else data.get("rpm"),
            backends=data.get("backends", {}),
            reward=RewardConfig.from_dict(data.get("reward", {})),
            prompt_dir=data.get("prompt_dir"),
        )

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            max_refine_iters=self.max_refine_iters,
            parse_retries=self.parse_retries,
            workers=self.workers,
        )


def _load_script(path: str) -> list[dict]:
    try:
        entries = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read script {path}: {exc}") from exc
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"script {path} must be a non-empty JSON array")
    return entries


def build_backends(config: AppConfig, override: str | None = None) -> tuple[Gateway, PipelineBackends]:
    """Construct the gateway and per-role backend refs.

    ``override`` is the --backend flag: ``mock:<script.json>`` routes every
    role through one shared scripted backend, ``http:<base-url>`` through
    one HTTP backend. Without an override each role comes from the config
    file; scripted roles naming the same script file share one instance so
    consumption stays globally sequential.
    """
    templates = TemplateLibrary(config.prompt_dir) if config.prompt_dir else None
    gateway = Gateway(templates=templates, rng=random.Random(config.seed), rpm=config.rpm)
    if override:
        kind, _, value = override.partition(":")
        if kind == "mock":
            backend = ScriptedBackend(_load_script(value))
        elif kind == "http":
            backend = HttpBackend(base_url=value)
        else:
            raise ConfigError(f"unknown backend override: {override!r}")
        refs = {}
        for role in ROLES:
            gateway.register(role, backend)
            refs[role] = BackendRef(gateway=gateway, tag=role)
        return gateway, PipelineBackends(**refs)

    shared_scripts: dict[str, ScriptedBackend] = {}
    refs = {}
    for role in ROLES:
        entry = config.backends.get(role)
        if entry is None:
            raise ConfigError(f"config missing backend for role {role!r}")
        btype = entry.get("type")
        if btype == "scripted":
            script_path = entry.get("script")
            if script_path:
                if script_path not in shared_scripts:
                    shared_scripts[script_path] = ScriptedBackend(_load_script(script_path))
                backend = shared_scripts[script_path]
            else:
                backend = ScriptedBackend(entry.get("entries", []))
        elif btype == "http":
            backend = HttpBackend(base_url=entry.get("base_url"), model=entry.get("model", "gpt-4o"))
        else:
            raise ConfigError(f"backend {role!r} has unknown type {btype!r}")
        gateway.register(role, backend)
        refs[role] = BackendRef(gateway=gateway, tag=role)
    return gateway, PipelineBackends(**refs)


def _read_qa_samples(path: str) -> list[QASample]:
    return [QASample.from_record(r) for r in read_records(path)]


def _write_failures(out_path: str, failures: list[SampleFailure]) -> None:
    write_records(
        Path(out_path).with_suffix(Path(out_path).suffix + ".failures"),
        [{"version": "1", "qa_id": f.qa_id, "error": f.error} for f in failures],
    )


# --- subcommands ---

def cmd_generate(args) -> int:
    config = AppConfig.load(args.config)
    gateway, backends = build_backends(config, args.backend)
    samples = _read_qa_samples(args.infile)

    if args.dry_run:
        for qa in samples:
            stand_in = Schema(kind=StructureKind.TABLE, attributes=("attribute",), question_id=qa.id)
            renders = [
                ("structure_select", {"question": qa.question}),
                ("schema_construct", {"question": qa.question, "kind": "Table"}),
                (
                    "trace_generate",
                    {
                        "question": qa.question,
                        "documents": render_documents(qa.documents),
                        "schema": render_schema(stand_in),
                    },
                ),
            ]
            for template_id, bindings in renders:
                print(f"--- {qa.id} :: {template_id} ---")
                print(gateway.render(template_id, bindings))
        assert gateway.call_count == 0
        return 0

    curated: list[CuratedSample] = []
    failures: list[SampleFailure] = []
    try:
        for outcome in iter_batch(samples, config.pipeline_config(), backends):
            if isinstance(outcome, CuratedSample):
                curated.append(outcome)
            else:
                failures.append(outcome)
    except KeyboardInterrupt:
        print("interrupted; flushing completed samples", file=sys.stderr)
        failures.extend(
            SampleFailure(qa_id=qa.id, error="Interrupted")
            for qa in samples[len(curated) + len(failures):]
        )
    write_records(args.out, [c.to_record() for c in curated])
    if failures:
        _write_failures(args.out, failures)
        print(f"{len(failures)} sample(s) failed; see {args.out}.failures", file=sys.stderr)
        return 1
    return 0


def cmd_build_dataset(args) -> int:
    curated = [CuratedSample.from_record(r) for r in read_records(args.infile)]
    samples = [build_training_sample(c) for c in curated]
    records = [s.to_record() for s in samples]
    write_records(args.out, records)
    if args.stats:
        Path(args.stats).write_text(canonical_json(corpus_stats(records).to_record()) + "\n")
    return 0


def cmd_score(args) -> int:
    config = AppConfig.load(args.config)
    gateway, backends = build_backends(config, args.backend)
    rollouts = read_records(args.group)
    groups: dict[str, list[dict]] = {}
    for record in rollouts:
        groups.setdefault(record.get("group_id") or "default", []).append(record)

    out_records = []
    failed = False
    for group_id, members in groups.items():
        totals = []
        for record in members:
            try:
                breakdown, audit = score_rollout(
                    rollout=record["rollout"],
                    reference_target=record["reference_target"],
                    kind=StructureKind(record["structure_kind"]),
                    judge=backends.judge,
                    cfg=config.reward,
                )
            except CostForgeError as exc:
                failed = True
                out_records.append(
                    {"version": "1", "group_id": group_id, "error": f"{type(exc).__name__}: {exc}"}
                )
                continue
            totals.append(breakdown.total)
            out_records.append(
                {
                    "version": "1",
                    "group_id": group_id,
                    "breakdown": breakdown.to_record(),
                    "audit": [{"label": a.label, "call_id": a.call_id} for a in audit],
                }
            )
        if len(totals) >= 2:
            out_records.append(
                {
                    "version": "1",
                    "group_id": group_id,
                    "advantages": group_advantages(totals, config.reward.std_floor),
                }
            )
    write_records(args.out, out_records)
    return 1 if failed else 0


def cmd_reward_serve(args) -> int:
    from .service import create_app, serve

    config = AppConfig.load(args.config)
    _, backends = build_backends(config, args.backend)
    app = create_app(config.reward, backends.judge)
    serve(app, bind=args.bind, port=args.port)
    return 0


def cmd_eval(args) -> int:
    config = AppConfig.load(args.config)
    _, backends = build_backends(config, args.backend)
    records = read_records(args.infile)

    def one(record):
        try:
            curated = CuratedSample.from_record(record)
            return evaluate_sample(curated.qa, curated.structure, backends.reasoner, backends.judge)
        except CostForgeError as exc:
            return SampleFailure(qa_id=record.get("id", "?"), error=str(exc))

    if config.workers <= 1:
        outcomes = [one(r) for r in records]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(one, records))
    eval_records = sorted(
        (o for o in outcomes if isinstance(o, EvalRecord)), key=lambda r: r.qa_id
    )
    failures = [o for o in outcomes if isinstance(o, SampleFailure)]
    if not eval_records:
        print("no evaluable records", file=sys.stderr)
        return 1
    report = aggregate(eval_records)
    if args.out:
        Path(args.out).write_text(canonical_json(report.to_record()) + "\n")
    print(report.summary_table())
    if failures:
        if args.out:
            _write_failures(args.out, failures)
        return 1
    return 0


def cmd_latency(args) -> int:
    config = AppConfig.load(args.config)
    _, backends = build_backends(config, args.backend)
    samples = _read_qa_samples(args.infile)
    from .pipeline import run_sample

    timings = []
    for qa in samples:
        seconds = measure_latency(lambda: run_sample(qa, config.pipeline_config(), backends))
        timings.append({"qa_id": qa.id, "seconds": seconds})
    mean = sum(t["seconds"] for t in timings) / len(timings) if timings else 0.0
    payload = {"version": "1", "per_sample": timings, "mean_seconds": mean}
    if args.out:
        Path(args.out).write_text(canonical_json(payload) + "\n")
    print(f"mean latency: {mean:.3f}s over {len(timings)} sample(s)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="costforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", default=None, help="JSON config file")
            p.add_argument("--backend", default=None, help="mock:<script.json> or http:<base-url>")

    p = sub.add_parser("generate", help="run the curation pipeline")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dry-run", action="store_true")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("build-dataset", help="curated records to training records")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stats", default=None)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("score", help="reward breakdowns for rollout groups")
    p.add_argument("--group", required=True, help="rollout record file")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("reward-serve", help="start the reward service")
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--bind", default="127.0.0.1")
    common(p)
    p.set_defaults(func=cmd_reward_serve)

    p = sub.add_parser("eval", help="two-hop evaluation of curated records")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", default=None)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("latency", help="timed generation runs")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", default=None)
    common(p)
    p.set_defaults(func=cmd_latency)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CostForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
