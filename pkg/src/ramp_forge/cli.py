"""Command-line pipeline runner.

Subcommands: ingest, index, serve-search, mask, synthesize, judge, reward,
curriculum, emit-sft, eval. Configuration comes from one JSON file plus
--set dotted.key=value overrides; every run writes a manifest (resolved
config, config hash, seed, input paths, counts, outputs) sufficient to
reproduce it. Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import curriculum as curriculum_mod
from . import evalharness
from .chat import ChatClient, ChatClientError, HttpChatClient, ScriptedChatClient
from .config import (
    ClientConfig,
    ConfigError,
    PipelineConfig,
    apply_overrides,
    build_config,
    config_digest,
    config_to_dict,
    load_config_dict,
    require_corpus,
)
from .corpus import CorpusError, DocumentStore, ingest_corpus, write_corpus
from .masking import (
    MASK_TOKEN,
    CorpusFrequencyScorer,
    HeuristicSpanExtractor,
    MaskedSample,
    MaskingError,
    extract_salient_spans,
    read_masked_samples,
    reconstruct_paragraph,
    render_ramp_prompt,
    select_masks_ppl_greedy,
    select_masks_random,
    write_masked_samples,
)
from .retrieval import RetrievalError, SearchTool, build_index, save_index
from .rewards import PenaltyParams, RewardError, hybrid_reward
from .service import serve_search
from .synthesis import (
    AgentConfig,
    AgentProtocolError,
    StepLimitExceeded,
    distill_single_model,
    judge_filter,
    synthesize_multiagent,
)
from .trajectory import (
    TrajectoryError,
    read_trajectories,
    serialize_trajectory,
    write_trajectories,
)

logger = logging.getLogger(__name__)

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        raise UsageError(message)


def _setup_logging() -> None:
    raw = os.environ.get("RAMP_FORGE_LOG", "")
    if raw and raw not in LOG_LEVELS:
        raise UsageError(
            f"RAMP_FORGE_LOG must be one of {sorted(LOG_LEVELS)}, got {raw!r}"
        )
    logging.basicConfig(
        level=LOG_LEVELS.get(raw, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config_dict(args.config)
    cfg = apply_overrides(cfg, args.set or [])
    config = build_config(cfg)
    if args.out is not None:
        config.out_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    return config


def _out_dir(config: PipelineConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(
    config: PipelineConfig,
    subcommand: str,
    inputs: dict[str, str],
    counts: dict[str, int],
    outputs: list[str],
) -> Path:
    out = _out_dir(config)
    manifest = {
        "subcommand": subcommand,
        "config": config_to_dict(config),
        "config_hash": config_digest(config),
        "seed": config.seed,
        "inputs": inputs,
        "counts": counts,
        "outputs": outputs,
    }
    path = out / f"manifest_{subcommand}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, ensure_ascii=False, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def _make_client(cc: ClientConfig, where: str) -> ChatClient:
    if cc.kind == "scripted":
        if not cc.replay_path:
            raise ConfigError(f"{where}.replay_path", "required when kind=scripted")
        return ScriptedChatClient.from_file(cc.replay_path)
    if not cc.base_url:
        raise ConfigError(f"{where}.base_url", "required when kind=http")
    if not cc.model:
        raise ConfigError(f"{where}.model", "required when kind=http")
    return HttpChatClient(
        base_url=cc.base_url,
        model=cc.model,
        path=cc.path,
        timeout=cc.timeout,
        max_retries=cc.max_retries,
        temperature=cc.temperature,
    )


def _agent_config(config: PipelineConfig) -> AgentConfig:
    return AgentConfig(
        max_steps=config.synthesis.max_steps, top_k=config.index.top_k
    )


def _search_tool(config: PipelineConfig, store: DocumentStore) -> SearchTool:
    index = build_index(store, config.index.k1, config.index.b)
    return SearchTool(index, config.index.top_k)


def _load_samples(path: str) -> dict[str, MaskedSample]:
    samples = read_masked_samples(path)
    return {s.sample_id: s for s in samples}


def cmd_ingest(config: PipelineConfig, args) -> int:
    store = ingest_corpus(require_corpus(config))
    out = _out_dir(config)
    written = write_corpus(store, out / "corpus.jsonl")
    _write_manifest(
        config,
        "ingest",
        {"corpus": config.corpus},
        {"documents": written},
        ["corpus.jsonl"],
    )
    print(f"ingested {written} documents -> {out / 'corpus.jsonl'}")
    return 0


def cmd_index(config: PipelineConfig, args) -> int:
    store = ingest_corpus(require_corpus(config))
    index = build_index(store, config.index.k1, config.index.b)
    out = _out_dir(config)
    save_index(index, out / "index.json")
    _write_manifest(
        config,
        "index",
        {"corpus": config.corpus},
        {"documents": index.doc_count, "terms": len(index.postings)},
        ["index.json"],
    )
    print(
        f"indexed {index.doc_count} documents, {len(index.postings)} terms "
        f"-> {out / 'index.json'}"
    )
    return 0


def cmd_serve_search(config: PipelineConfig, args) -> int:
    store = ingest_corpus(require_corpus(config))
    index = build_index(store, config.index.k1, config.index.b)
    service = serve_search(
        index, f"{config.serve.host}:{config.serve.port}", config.index.top_k
    )
    _write_manifest(
        config,
        "serve-search",
        {"corpus": config.corpus},
        {"documents": index.doc_count},
        [],
    )
    print(f"serving search on {service.url}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


def cmd_mask(config: PipelineConfig, args) -> int:
    store = ingest_corpus(require_corpus(config))
    extractor = HeuristicSpanExtractor()
    spans_by_doc = {doc.doc_id: extract_salient_spans(doc, extractor) for doc in store}
    scorer = (
        CorpusFrequencyScorer(store)
        if config.masking.strategy == "ppl_greedy"
        else None
    )

    samples: list[MaskedSample] = []
    used: set[str] = set()
    for k in sorted(config.masking.k_distribution):
        needed = config.masking.k_distribution[k]
        for doc in store:
            if needed == 0:
                break
            if (
                doc.doc_id in used
                or MASK_TOKEN in doc.text
                or len(spans_by_doc[doc.doc_id]) < k
            ):
                continue
            spans = spans_by_doc[doc.doc_id]
            if scorer is not None:
                sample = select_masks_ppl_greedy(doc, spans, k, scorer)
            else:
                sample = select_masks_random(
                    doc, spans, k, config.seed + len(samples)
                )
            samples.append(sample)
            used.add(doc.doc_id)
            needed -= 1
        if needed:
            raise MaskingError(
                f"corpus has too few documents with >= {k} salient spans "
                f"({needed} short for k={k})"
            )
    out = _out_dir(config)
    written = write_masked_samples(samples, out / "samples.jsonl")
    _write_manifest(
        config,
        "mask",
        {"corpus": config.corpus},
        {"samples": written},
        ["samples.jsonl"],
    )
    print(f"masked {written} samples -> {out / 'samples.jsonl'}")
    return 0


def cmd_synthesize(config: PipelineConfig, args) -> int:
    store = ingest_corpus(require_corpus(config))
    tool = _search_tool(config, store)
    client = _make_client(config.synthesis.client, "synthesis.client")
    agent_cfg = _agent_config(config)
    samples = read_masked_samples(args.samples)

    trajectories = []
    skipped: list[dict] = []
    for sample in samples:
        try:
            if config.synthesis.mode == "multiagent":
                trajectory = synthesize_multiagent(sample, client, tool, agent_cfg)
            else:
                trajectory = distill_single_model(sample, client, tool, agent_cfg)
        except (TrajectoryError, StepLimitExceeded, AgentProtocolError) as exc:
            skipped.append({"sample_id": sample.sample_id, "reason": str(exc)})
            continue
        trajectories.append(trajectory)
    out = _out_dir(config)
    written = write_trajectories(trajectories, out / "trajectories.jsonl")
    with open(out / "skipped.jsonl", "w", encoding="utf-8") as fh:
        for row in skipped:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    _write_manifest(
        config,
        "synthesize",
        {"corpus": config.corpus, "samples": args.samples},
        {"trajectories": written, "skipped": len(skipped)},
        ["trajectories.jsonl", "skipped.jsonl"],
    )
    print(f"synthesized {written} trajectories ({len(skipped)} skipped)")
    return 0


def cmd_judge(config: PipelineConfig, args) -> int:
    samples = _load_samples(args.samples)
    trajectories = read_trajectories(args.trajectories)
    judge = _make_client(config.synthesis.judge, "synthesis.judge")

    kept = []
    verdicts = []
    for trajectory in trajectories:
        sample = samples.get(trajectory.sample_id)
        if sample is None:
            raise MaskingError(f"no masked sample for id {trajectory.sample_id}")
        decision = judge_filter(sample, trajectory, judge)
        verdicts.append(
            {
                "sample_id": trajectory.sample_id,
                "keep": decision.keep,
                "unparseable": decision.unparseable,
            }
        )
        if decision.keep:
            kept.append(trajectory)
    out = _out_dir(config)
    written = write_trajectories(kept, out / "kept.jsonl")
    with open(out / "verdicts.jsonl", "w", encoding="utf-8") as fh:
        for row in verdicts:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    _write_manifest(
        config,
        "judge",
        {"samples": args.samples, "trajectories": args.trajectories},
        {"kept": written, "judged": len(verdicts)},
        ["kept.jsonl", "verdicts.jsonl"],
    )
    print(f"kept {written} of {len(verdicts)} trajectories")
    return 0


def cmd_reward(config: PipelineConfig, args) -> int:
    samples = _load_samples(args.samples)
    trajectories = read_trajectories(args.trajectories)
    mode = config.rewards.mode
    params = PenaltyParams(
        alpha=config.rewards.alpha,
        beta=config.rewards.beta,
        gamma=config.rewards.gamma,
    )
    judge = (
        _make_client(config.synthesis.judge, "synthesis.judge")
        if mode == "judge"
        else None
    )

    out = _out_dir(config)
    written = 0
    with open(out / "rewards.jsonl", "w", encoding="utf-8") as fh:
        for trajectory in trajectories:
            sample = samples.get(trajectory.sample_id)
            if sample is None:
                raise MaskingError(f"no masked sample for id {trajectory.sample_id}")
            breakdown = hybrid_reward(
                serialize_trajectory(trajectory),
                reconstruct_paragraph(sample),
                mode,
                params=params,
                judge=judge,
                question=render_ramp_prompt(sample),
            )
            fh.write(
                json.dumps(
                    {
                        "sample_id": trajectory.sample_id,
                        "format": breakdown.format,
                        "answer": breakdown.answer,
                        "total": breakdown.total,
                        "mode": mode,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            written += 1
    _write_manifest(
        config,
        "reward",
        {"samples": args.samples, "trajectories": args.trajectories},
        {"rewarded": written},
        ["rewards.jsonl"],
    )
    print(f"rewarded {written} trajectories ({mode} mode)")
    return 0


def cmd_curriculum(config: PipelineConfig, args) -> int:
    sample_list = read_masked_samples(args.samples)
    if args.trajectories:
        have = {t.sample_id for t in read_trajectories(args.trajectories)}
        sample_list = [s for s in sample_list if s.sample_id in have]

    per_k = config.curriculum.stage_mix.get("ramp_per_k", 0)
    if per_k:
        sample_list = curriculum_mod.subsample_per_k(sample_list, per_k, config.seed)
    outputs = ["plan.json"]
    counts = {"planned": len(sample_list)}
    out = _out_dir(config)
    if config.curriculum.validation_per_k:
        sample_list, validation = curriculum_mod.split_validation(
            sample_list, config.curriculum.validation_per_k, config.seed
        )
        write_masked_samples(validation, out / "validation_samples.jsonl")
        outputs.append("validation_samples.jsonl")
        counts["planned"] = len(sample_list)
        counts["validation"] = len(validation)
    if config.curriculum.strategy == "mixed":
        plan = curriculum_mod.mixed_order(sample_list, config.seed)
    else:
        plan = curriculum_mod.curriculum_order(sample_list)
    curriculum_mod.write_plan(plan, out / "plan.json")
    inputs = {"samples": args.samples}
    if args.trajectories:
        inputs["trajectories"] = args.trajectories
    _write_manifest(config, "curriculum", inputs, counts, outputs)
    print(f"planned {len(plan.ordered_ids)} samples ({plan.strategy})")
    return 0


def cmd_emit_sft(config: PipelineConfig, args) -> int:
    samples = _load_samples(args.samples)
    trajectories = {t.sample_id: t for t in read_trajectories(args.trajectories)}
    plan = curriculum_mod.read_plan(args.plan)
    out = _out_dir(config)
    sft_path = out / "sft.jsonl"
    records = curriculum_mod.emit_sft_records(plan, samples, trajectories, sft_path)
    counts = {"records": len(records)}
    inputs = {
        "samples": args.samples,
        "trajectories": args.trajectories,
        "plan": args.plan,
    }
    if args.downstream:
        budget = config.curriculum.stage_mix.get("downstream", 0)
        appended = curriculum_mod.append_downstream(sft_path, args.downstream, budget)
        counts["downstream"] = appended
        inputs["downstream"] = args.downstream
    _write_manifest(config, "emit-sft", inputs, counts, ["sft.jsonl"])
    print(f"emitted {sum(counts.values())} SFT records -> {sft_path}")
    return 0


def cmd_eval(config: PipelineConfig, args) -> int:
    store = ingest_corpus(require_corpus(config))
    tool = _search_tool(config, store)
    agent = _make_client(config.synthesis.client, "synthesis.client")
    dataset = evalharness.load_qa(args.qa)
    report = evalharness.evaluate_agent(
        dataset, agent, tool, _agent_config(config), dataset_name=Path(args.qa).stem
    )
    out = _out_dir(config)
    report_path = out / "eval_report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(evalharness.render_report(report, "json"))
        fh.write("\n")
    _write_manifest(
        config,
        "eval",
        {"corpus": config.corpus, "qa": args.qa},
        {"examples": report.n, "errored": len(report.errored)},
        ["eval_report.json"],
    )
    print(evalharness.render_report(report, "table"))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="ramp-forge", description=__doc__)
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="path to the pipeline config JSON")
    shared.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config value by dotted path (repeatable)",
    )
    shared.add_argument("--out", help="output directory (overrides config)")
    shared.add_argument("--seed", type=int, help="seed (overrides config)")

    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("ingest", parents=[shared]).set_defaults(run=cmd_ingest)
    sub.add_parser("index", parents=[shared]).set_defaults(run=cmd_index)
    sub.add_parser("serve-search", parents=[shared]).set_defaults(
        run=cmd_serve_search
    )
    sub.add_parser("mask", parents=[shared]).set_defaults(run=cmd_mask)

    p = sub.add_parser("synthesize", parents=[shared])
    p.add_argument("--samples", required=True, help="masked samples JSONL")
    p.set_defaults(run=cmd_synthesize)

    p = sub.add_parser("judge", parents=[shared])
    p.add_argument("--samples", required=True)
    p.add_argument("--trajectories", required=True)
    p.set_defaults(run=cmd_judge)

    p = sub.add_parser("reward", parents=[shared])
    p.add_argument("--samples", required=True)
    p.add_argument("--trajectories", required=True)
    p.set_defaults(run=cmd_reward)

    p = sub.add_parser("curriculum", parents=[shared])
    p.add_argument("--samples", required=True)
    p.add_argument(
        "--trajectories",
        help="restrict the plan to samples that have a kept trajectory",
    )
    p.set_defaults(run=cmd_curriculum)

    p = sub.add_parser("emit-sft", parents=[shared])
    p.add_argument("--samples", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--downstream", help="prebuilt SFT JSONL appended after stage k=4")
    p.set_defaults(run=cmd_emit_sft)

    p = sub.add_parser("eval", parents=[shared])
    p.add_argument("--qa", required=True, help="QA JSONL with id/question/answers")
    p.set_defaults(run=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        _setup_logging()
        parser = build_parser()
        args = parser.parse_args(argv)
        config = _resolve_config(args)
        return args.run(config, args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        CorpusError,
        MaskingError,
        TrajectoryError,
        RetrievalError,
        RewardError,
        ChatClientError,
        curriculum_mod.CurriculumError,
        evalharness.EvalError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
