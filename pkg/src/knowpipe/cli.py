"""Single entry point: configuration, subcommands, stage orchestration."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

from . import dataprep, metrics, pool, reasoning, scoring
from .core import (
    Question,
    RunConfig,
    index_questions,
    load_dataset,
    load_knowledge_records,
    persist_stage,
)
from .errors import ConfigError, KnowpipeError
from .figures import save_sweep_curve
from .gateway import Gateway, HttpChatBackend, ResponseCache, TokenLedger
from .mockworld import (
    MockChatBackend,
    MockWorldSpec,
    PlantedPolarityScorer,
    dataset_to_jsonl_rows,
    make_synthetic_dataset,
)

log = logging.getLogger("knowpipe")

SCORER_URL_ENV = "KNOWPIPE_SCORER_URL"

SWEEPABLE = ("top_k", "answer_samples", "knowledge_samples", "strategy")


def _log_event(stage: str, event: str, **extra: Any) -> None:
    log.info(json.dumps({"stage": stage, "event": event, **extra}, sort_keys=True))


# ── Configuration plumbing ──────────────────────────────────────────────

_CONFIG_FIELDS = [f.name for f in fields(RunConfig)]
_WORLD_FIELDS = ("p0", "p_pos", "p_neg", "positive_rate")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run configuration (flags > config file > defaults)")
    group.add_argument("--config", type=Path, help="JSON config file")
    group.add_argument("--knowledge-temperature", type=float)
    group.add_argument("--knowledge-samples", type=int)
    group.add_argument("--answer-temperature", type=float)
    group.add_argument("--answer-samples", "--n", dest="answer_samples", type=int)
    group.add_argument("--top-k", type=int)
    group.add_argument("--llm-endpoint")
    group.add_argument("--llm-model")
    group.add_argument("--scorer-endpoint")
    group.add_argument("--cache-dir")
    group.add_argument("--concurrency-limit", type=int)
    group.add_argument("--seed", type=int)
    world = parser.add_argument_group("mock world")
    world.add_argument("--mock-p0", type=float)
    world.add_argument("--mock-p-pos", type=float)
    world.add_argument("--mock-p-neg", type=float)
    world.add_argument("--mock-positive-rate", type=float)


def _resolve_config(args: argparse.Namespace) -> tuple[RunConfig, MockWorldSpec]:
    from_file: dict[str, Any] = {}
    if args.config is not None:
        try:
            from_file = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc

    values: dict[str, Any] = {}
    for name in _CONFIG_FIELDS:
        if name in from_file:
            values[name] = from_file[name]
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    cfg = RunConfig(**values).validate()

    world_values: dict[str, Any] = dict(from_file.get("mock_world", {}))
    for name in _WORLD_FIELDS:
        flag = getattr(args, f"mock_{name}", None)
        if flag is not None:
            world_values[name] = flag
    world = MockWorldSpec(seed=cfg.seed, **world_values)
    return cfg, world


def _build_gateway(cfg: RunConfig, world: MockWorldSpec) -> Gateway:
    if cfg.llm_endpoint.startswith("mock"):
        backend = MockChatBackend(world)
    else:
        backend = HttpChatBackend(cfg.llm_endpoint, cfg.llm_model)
    cache = ResponseCache(cfg.cache_dir) if cfg.cache_dir else None
    return Gateway(backend=backend, cache=cache, concurrency_limit=cfg.concurrency_limit)


def _build_scorer(kind: str, cfg: RunConfig):
    if kind == "oracle":
        return scoring.OracleScorer()
    if kind == "planted":
        return PlantedPolarityScorer()
    if kind == "constant":
        return scoring.ConstantScorer()
    if kind == "remote":
        endpoint = os.getenv(SCORER_URL_ENV) or cfg.scorer_endpoint
        if not endpoint:
            raise ConfigError(
                "remote scorer selected but no scorer endpoint configured "
                f"(set scorer_endpoint or ${SCORER_URL_ENV})"
            )
        scorer = scoring.RemoteScorer(endpoint)
        if not scorer.healthy():
            raise ConfigError(f"scorer at {endpoint} failed its health check")
        return scorer
    raise ConfigError(f"unknown scorer kind {kind!r}")


# ── Content-addressed stage files ───────────────────────────────────────


def _digest_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _stage_key(payload: dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()[:12]


def _fresh(path: Path, stage: str) -> bool:
    """True when the stage must run; existing outputs are reused as-is."""
    if path.exists():
        _log_event(stage, "skipped", output=str(path), reason="output exists")
        return False
    return True


# ── Stage implementations ───────────────────────────────────────────────


def _cmd_elicit(args: argparse.Namespace) -> int:
    cfg, world = _resolve_config(args)
    questions = load_dataset(args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    key = _stage_key(
        {
            "stage": "elicit",
            "dataset": _digest_file(Path(args.dataset)),
            "temperature": cfg.knowledge_temperature,
            "samples": cfg.knowledge_samples,
            "model": cfg.llm_model,
            "endpoint": cfg.llm_endpoint,
            "seed": cfg.seed,
        }
    )
    out_path = out_dir / f"knowledge_{key}.jsonl"
    if _fresh(out_path, "elicit"):
        gateway = _build_gateway(cfg, world)
        records = pool.elicit_pool(questions, cfg, gateway)
        persist_stage(records, out_path)
        _log_event("elicit", "done", output=str(out_path), records=len(records))
    return 0


def _cmd_label(args: argparse.Namespace) -> int:
    cfg, world = _resolve_config(args)
    questions = load_dataset(args.dataset)
    records = load_knowledge_records(args.pool)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    key = _stage_key(
        {
            "stage": "label",
            "dataset": _digest_file(Path(args.dataset)),
            "pool": _digest_file(Path(args.pool)),
            "temperature": cfg.answer_temperature,
            "model": cfg.llm_model,
            "endpoint": cfg.llm_endpoint,
            "seed": cfg.seed,
        }
    )
    pool_path = out_dir / f"pool_{key}.jsonl"
    answers_path = out_dir / f"pool_answers_{key}.jsonl"
    if _fresh(pool_path, "label"):
        gateway = _build_gateway(cfg, world)
        labeled, samples = pool.label_pool(questions, records, cfg, gateway)
        persist_stage(labeled, pool_path)
        persist_stage(samples, answers_path)
        _log_event("label", "done", output=str(pool_path), records=len(labeled))
    return 0


def _cmd_prep(args: argparse.Namespace) -> int:
    cfg, _ = _resolve_config(args)
    questions = index_questions(load_dataset(args.dataset))
    records = load_knowledge_records(args.pool)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_fraction = 1.0 - args.val_fraction
    train, val = dataprep.prepare_training_set(
        records, questions, split=(train_fraction, args.val_fraction), seed=cfg.seed
    )
    key = _stage_key(
        {
            "stage": "prep",
            "pool": _digest_file(Path(args.pool)),
            "val_fraction": args.val_fraction,
            "seed": cfg.seed,
        }
    )
    train_path = out_dir / f"train_{key}.jsonl"
    val_path = out_dir / f"val_{key}.jsonl"
    dataprep.export_training_set(train, train_path)
    dataprep.export_training_set(val, val_path)
    _log_event("prep", "done", train=str(train_path), val=str(val_path),
               train_triples=len(train), val_triples=len(val))
    return 0


def _reason_once(
    questions: Sequence[Question],
    records,
    cfg: RunConfig,
    gateway: Gateway,
    scorer,
    strategy: str,
    out_path: Path,
) -> list[reasoning.ReasoningOutcome]:
    scored = None
    if strategy in ("mcr", "oo", "om", "mo", "mm"):
        if records is None:
            raise ConfigError(f"strategy {strategy!r} needs --pool")
        scored = scoring.score_pool(questions, records, scorer)
    outcomes = reasoning.run_dataset(questions, scored, cfg, gateway, strategy)
    reasoning.persist_outcomes(outcomes, out_path)
    return outcomes


def _cmd_reason(args: argparse.Namespace) -> int:
    cfg, world = _resolve_config(args)
    questions = load_dataset(args.dataset)
    records = load_knowledge_records(args.pool) if args.pool else None
    scorer = _build_scorer(args.scorer, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    key = _stage_key(
        {
            "stage": "reason",
            "dataset": _digest_file(Path(args.dataset)),
            "pool": _digest_file(Path(args.pool)) if args.pool else None,
            "strategy": args.strategy,
            "scorer": args.scorer,
            "top_k": cfg.top_k,
            "answer_samples": cfg.answer_samples,
            "temperature": cfg.answer_temperature,
            "model": cfg.llm_model,
            "endpoint": cfg.llm_endpoint,
            "seed": cfg.seed,
        }
    )
    out_path = out_dir / f"outcomes_{args.strategy}_{key}.jsonl"
    if _fresh(out_path, "reason"):
        gateway = _build_gateway(cfg, world)
        outcomes = _reason_once(questions, records, cfg, gateway, scorer, args.strategy, out_path)
        _log_event(
            "reason",
            "done",
            output=str(out_path),
            strategy=args.strategy,
            accuracy=metrics.accuracy(outcomes),
        )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    baseline = reasoning.load_outcomes(args.baseline)
    runs = []
    base_report = metrics.evaluate_run(
        baseline[0].strategy if baseline else "baseline",
        baseline,
        baseline,
        dataset_tag=args.dataset_tag,
    )
    runs.append(base_report)
    for method_path in args.method:
        outcomes = reasoning.load_outcomes(method_path)
        name = outcomes[0].strategy if outcomes else Path(method_path).stem
        runs.append(metrics.evaluate_run(name, outcomes, baseline, dataset_tag=args.dataset_tag))
    paths = metrics.report(runs, args.out)
    _log_event("eval", "done", **{k: str(v) for k, v in paths.items()})
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg, world = _resolve_config(args)
    questions = load_dataset(args.dataset)
    records = load_knowledge_records(args.pool) if args.pool else None
    scorer = _build_scorer(args.scorer, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    param = args.param
    raw_values = [v.strip() for v in args.values.split(",") if v.strip()]
    values: list[Any] = raw_values if param == "strategy" else [int(v) for v in raw_values]

    dataset_digest = _digest_file(Path(args.dataset))
    accuracies: list[float] = []
    for value in values:
        setting_cfg = cfg
        strategy = args.strategy
        setting_records = records
        if param == "strategy":
            strategy = str(value)
        elif param == "knowledge_samples":
            setting_cfg = RunConfig(
                **{**_config_as_dict(cfg), "knowledge_samples": value,
                   "top_k": min(cfg.top_k, value)}
            ).validate()
        else:
            setting_cfg = RunConfig(**{**_config_as_dict(cfg), param: value}).validate()
        key = _stage_key(
            {
                "stage": "sweep",
                "dataset": dataset_digest,
                "param": param,
                "value": value,
                "strategy": strategy,
                "scorer": args.scorer,
                "top_k": setting_cfg.top_k,
                "answer_samples": setting_cfg.answer_samples,
                "knowledge_samples": setting_cfg.knowledge_samples,
                "seed": setting_cfg.seed,
            }
        )
        out_path = out_dir / f"outcomes_{param}_{value}_{key}.jsonl"
        if _fresh(out_path, "sweep"):
            gateway = _build_gateway(setting_cfg, world)
            if param == "knowledge_samples" or setting_records is None:
                setting_records = pool.build_pool(questions, setting_cfg, gateway)
            _reason_once(
                questions, setting_records, setting_cfg, gateway, scorer, strategy, out_path
            )
        outcomes = reasoning.load_outcomes(out_path)
        acc = metrics.accuracy(outcomes)
        accuracies.append(acc)
        _log_event("sweep", "setting_done", param=param, value=value, accuracy=acc)

    summary = {"param": param, "values": values, "accuracy": accuracies}
    (out_dir / f"sweep_{param}.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    save_sweep_curve(param, values, accuracies, out_dir / f"sweep_{param}.png")
    _log_event("sweep", "done", param=param)
    return 0


def _config_as_dict(cfg: RunConfig) -> dict[str, Any]:
    return {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}


def _run_pipeline(
    questions: Sequence[Question],
    cfg: RunConfig,
    world: MockWorldSpec,
    scorer_kind: str,
    strategies: Sequence[str],
    out_dir: Path,
    dataset_tag: str,
) -> None:
    """Shared elicit→label→prep→reason→eval flow for pipeline and mock-bench."""
    out_dir.mkdir(parents=True, exist_ok=True)
    gateway = _build_gateway(cfg, world)

    pool_path = out_dir / "pool.jsonl"
    answers_path = out_dir / "pool_answers.jsonl"
    if _fresh(pool_path, "pipeline"):
        labeled, samples = pool.label_pool(
            questions, pool.elicit_pool(questions, cfg, gateway), cfg, gateway
        )
        persist_stage(labeled, pool_path)
        persist_stage(samples, answers_path)
    labeled = load_knowledge_records(pool_path)
    _log_event("pipeline", "pool_ready", records=len(labeled))

    try:
        train, val = dataprep.prepare_training_set(
            labeled, index_questions(questions), seed=cfg.seed
        )
        dataprep.export_training_set(train, out_dir / "train.jsonl")
        dataprep.export_training_set(val, out_dir / "val.jsonl")
        _log_event("pipeline", "prep_done", train=len(train), val=len(val))
    except KnowpipeError as exc:
        _log_event("pipeline", "prep_skipped", reason=str(exc))

    if scorer_kind == "pause":
        _log_event(
            "pipeline",
            "paused",
            reason="train the scorer on the exported triples, then rerun with --scorer remote",
        )
        return

    scorer = _build_scorer(scorer_kind, cfg)
    baseline_outcomes = None
    runs: list[metrics.EvalReport] = []
    tokens_path = out_dir / "tokens.json"
    tokens: dict[str, Any] = {}
    if tokens_path.exists():
        tokens = json.loads(tokens_path.read_text(encoding="utf-8"))
    ordered = ["few_shot"] + [s for s in strategies if s != "few_shot"]
    for strategy in ordered:
        out_path = out_dir / f"outcomes_{strategy}.jsonl"
        if _fresh(out_path, "pipeline"):
            before_in, before_out, *_ = gateway.ledger.snapshot()
            outcomes = _reason_once(questions, labeled, cfg, gateway, scorer, strategy, out_path)
            after_in, after_out, *_ = gateway.ledger.snapshot()
            tokens[strategy] = {
                "tokens_in": after_in - before_in,
                "tokens_out": after_out - before_out,
                "total": (after_in - before_in) + (after_out - before_out),
            }
        else:
            outcomes = reasoning.load_outcomes(out_path)
        spent = tokens.get(strategy, {}).get(
            "total", sum(o.tokens_total for o in outcomes)
        )
        if strategy == "few_shot":
            baseline_outcomes = outcomes
        runs.append(
            metrics.evaluate_run(
                strategy, outcomes, baseline_outcomes, dataset_tag=dataset_tag, tokens_total=spent
            )
        )
        _log_event("pipeline", "strategy_done", strategy=strategy,
                   accuracy=metrics.accuracy(outcomes))

    (out_dir / "tokens.json").write_text(
        json.dumps(tokens, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    metrics.report(runs, out_dir / "report")
    _log_event("pipeline", "done", report=str(out_dir / "report"))


def _cmd_pipeline(args: argparse.Namespace) -> int:
    cfg, world = _resolve_config(args)
    if args.scorer == "remote":
        _build_scorer("remote", cfg)  # fail fast before any LLM call
    questions = load_dataset(args.dataset)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    _run_pipeline(
        questions, cfg, world, args.scorer, strategies, Path(args.out), Path(args.dataset).stem
    )
    return 0


def _cmd_mock_bench(args: argparse.Namespace) -> int:
    cfg, world = _resolve_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    questions = make_synthetic_dataset(args.questions, args.options, seed=cfg.seed)
    dataset_path = out_dir / "dataset.jsonl"
    with dataset_path.open("w", encoding="utf-8") as fh:
        for row in dataset_to_jsonl_rows(questions):
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    if cfg.cache_dir is None:
        cfg = RunConfig(**{**_config_as_dict(cfg), "cache_dir": str(out_dir / "cache")})
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    _run_pipeline(questions, cfg, world, args.scorer, strategies, out_dir, "mockbench")
    return 0


# ── Argument parsing ────────────────────────────────────────────────────


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="knowpipe",
        description=(
            "Batch pipeline: elicit commonsense knowledge from an LLM, label its "
            "contribution, filter it with a scorer, and answer by majority vote."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        return p

    p = add("elicit", "generate knowledge for every dataset question")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_elicit)

    p = add("label", "answer with/without each knowledge piece and assign levels")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_label)

    p = add("prep", "turn a labeled pool into scorer training data")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.set_defaults(func=_cmd_prep)

    p = add("reason", "answer the dataset under one sampling strategy")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pool")
    p.add_argument("--strategy", choices=reasoning.STRATEGIES, default="mcr")
    p.add_argument("--scorer", choices=("oracle", "planted", "constant", "remote"),
                   default="oracle")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reason)

    p = add("eval", "compare method outcome files against a baseline run")
    p.add_argument("--baseline", required=True)
    p.add_argument("--method", action="append", required=True)
    p.add_argument("--dataset-tag", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = add("sweep", "rerun one strategy across values of one parameter")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pool")
    p.add_argument("--param", choices=SWEEPABLE, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--strategy", choices=reasoning.STRATEGIES, default="mcr")
    p.add_argument("--scorer", choices=("oracle", "planted", "constant", "remote"),
                   default="oracle")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = add("pipeline", "elicit, label, prep, reason, and evaluate in one go")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scorer", choices=("oracle", "planted", "constant", "remote", "pause"),
                   default="oracle")
    p.add_argument("--strategies", default="few_shot,cot_sc,mcr")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pipeline)

    p = add("mock-bench", "full offline pipeline on a synthetic dataset")
    p.add_argument("--questions", type=int, default=200)
    p.add_argument("--options", type=int, default=3)
    p.add_argument("--scorer", choices=("oracle", "planted", "constant"), default="planted")
    p.add_argument("--strategies", default="few_shot,cot_sc,mcr")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mock_bench)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error(json.dumps({"event": "config_error", "error": str(exc)}))
        return 2
    except KnowpipeError as exc:
        log.error(json.dumps({"event": "stage_error", "error": str(exc)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
