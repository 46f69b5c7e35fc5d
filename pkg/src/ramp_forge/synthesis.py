"""Trajectory synthesis.

Two generators produce tagged trajectories for mask samples: a multi-agent
loop (planner proposes, rewriter refines queries, observer reviews results
and answers) and a single distilled teacher driven by the RL template with
harness-intercepted <search> calls. In both, the harness executes retrieval
and authors every <information> segment itself; a model that emits one is a
format violation. A judge filters finished trajectories, and self-evolve
rounds accumulate kept partitions until a retrain threshold is crossed.

Samples are processed sequentially: byte-reproducible runs are a contract
here, and a worker pool would reorder partition files.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .chat import ChatClient, ChatClientError
from .masking import MaskedSample, reconstruct_paragraph, render_ramp_prompt
from .prompts import (
    JUDGE_PROMPT,
    OBSERVER_PROMPT,
    PLANNER_PROMPT,
    REWRITER_PROMPT,
    render_template,
)
from .retrieval import SearchHit, SearchTool
from .rewards import judge_verdict
from .trajectory import (
    ANSWER,
    INFORMATION,
    SEARCH,
    THINK,
    Trajectory,
    TrajectoryError,
    parse_trajectory,
    render_rl_template,
    render_segments,
    trajectory_to_dict,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 8
DEFAULT_THRESHOLDS = (500, 1000, 2000)


class AgentProtocolError(RuntimeError):
    """An agent reply broke the JSON envelope contract."""

    def __init__(self, role: str, detail: str):
        super().__init__(f"{role}: {detail}")
        self.role = role


class StepLimitExceeded(RuntimeError):
    """The loop wanted more searches than cfg.max_steps allows.

    ``partial`` carries the structurally valid trajectory built so far
    (ending in the refused search); it must not enter any dataset.
    """

    def __init__(self, message: str, partial: Trajectory):
        super().__init__(message)
        self.partial = partial


@dataclass
class AgentConfig:
    planner_prompt: str = PLANNER_PROMPT
    rewriter_prompt: str = REWRITER_PROMPT
    observer_prompt: str = OBSERVER_PROMPT
    judge_prompt: str = JUDGE_PROMPT
    max_steps: int = DEFAULT_MAX_STEPS
    top_k: int = 5

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        required = {
            "planner_prompt": ("{question}",),
            "rewriter_prompt": ("{question}", "{query}"),
            "observer_prompt": ("{question}", "{history}"),
            "judge_prompt": ("{question}", "{target}", "{prediction}"),
        }
        for field_name, markers in required.items():
            template = getattr(self, field_name)
            for marker in markers:
                if marker not in template:
                    raise ValueError(f"{field_name} is missing {marker}")


@dataclass(frozen=True)
class JudgeDecision:
    keep: bool
    unparseable: bool
    raw: str


@dataclass(frozen=True)
class DistillationState:
    round_index: int = 0
    partitions: tuple[str, ...] = ()
    partition_sizes: tuple[int, ...] = ()
    accumulated_count: int = 0
    thresholds: tuple[int, ...] = DEFAULT_THRESHOLDS

    def __post_init__(self):
        if len(self.partitions) != len(self.partition_sizes):
            raise ValueError("partitions and partition_sizes disagree")
        if self.accumulated_count != sum(self.partition_sizes):
            raise ValueError("accumulated_count must equal the partition total")
        if list(self.thresholds) != sorted(set(self.thresholds)):
            raise ValueError("thresholds must be strictly increasing")

    @property
    def next_threshold(self) -> int | None:
        for t in self.thresholds:
            if self.accumulated_count < t:
                return t
        return None


@dataclass(frozen=True)
class RoundResult:
    state: DistillationState
    partition_path: str
    kept_count: int
    skipped: tuple[tuple[str, str], ...]
    retrain: bool


def _ask(client: ChatClient, prompt: str) -> str:
    return client.complete([{"role": "user", "content": prompt}])


def _parse_envelope(role: str, raw: str, terminal_keys: tuple[str, ...]) -> dict:
    """Parse one agent reply: a single JSON object holding a non-empty
    "thought" and exactly one of ``terminal_keys``."""
    try:
        obj = json.loads(raw.strip())
    except json.JSONDecodeError as exc:
        raise AgentProtocolError(role, f"reply is not a JSON object: {exc}") from exc
    if not isinstance(obj, dict):
        raise AgentProtocolError(role, f"reply is {type(obj).__name__}, not an object")
    thought = obj.get("thought")
    if not isinstance(thought, str) or not thought.strip():
        raise AgentProtocolError(role, 'reply is missing a non-empty "thought"')
    present = [k for k in terminal_keys if k in obj]
    if len(present) != 1:
        wanted = " or ".join(f'"{k}"' for k in terminal_keys)
        raise AgentProtocolError(role, f"reply must carry exactly one of {wanted}")
    value = obj[present[0]]
    if not isinstance(value, str) or not value.strip():
        raise AgentProtocolError(role, f'"{present[0]}" must be a non-empty string')
    return {"thought": thought, present[0]: value}


def render_information(hits: Sequence[SearchHit], tool: SearchTool) -> str:
    if not hits:
        return "(no results)"
    return "\n".join(
        f"{i}. {tool.title(hit.doc_id)}: {hit.snippet}"
        for i, hit in enumerate(hits, start=1)
    )


def synthesize_multiagent(
    sample: MaskedSample, client: ChatClient, tool: SearchTool, cfg: AgentConfig
) -> Trajectory:
    """Planner -> (rewriter -> search -> observer)* until the observer
    answers. Planner and observer thoughts become think segments; every
    candidate query passes through the rewriter before execution."""
    question = render_ramp_prompt(sample)
    planner = _parse_envelope(
        "planner",
        _ask(client, render_template(cfg.planner_prompt, question=question)),
        ("query",),
    )
    pairs: list[tuple[str, str]] = [(THINK, planner["thought"])]
    candidate = planner["query"]
    searches = 0
    while True:
        if searches >= cfg.max_steps:
            raise StepLimitExceeded(
                f"{sample.sample_id}: step limit {cfg.max_steps} reached "
                "without an answer",
                partial=Trajectory.from_segments(sample.sample_id, pairs),
            )
        rewriter = _parse_envelope(
            "rewriter",
            _ask(
                client,
                render_template(
                    cfg.rewriter_prompt, question=question, query=candidate
                ),
            ),
            ("query",),
        )
        query = rewriter["query"]
        pairs.append((SEARCH, query))
        pairs.append((INFORMATION, render_information(tool.search(query, cfg.top_k), tool)))
        searches += 1
        observer = _parse_envelope(
            "observer",
            _ask(
                client,
                render_template(
                    cfg.observer_prompt,
                    question=question,
                    history=render_segments(pairs),
                ),
            ),
            ("query", "answer"),
        )
        pairs.append((THINK, observer["thought"]))
        if "answer" in observer:
            pairs.append((ANSWER, observer["answer"]))
            return Trajectory.from_segments(sample.sample_id, pairs)
        candidate = observer["query"]


def _parse_emission(raw: str, where: str) -> list[tuple[str, str]]:
    """One teacher turn must parse as zero or more think segments followed
    by exactly one search or answer segment."""
    try:
        emitted = parse_trajectory(raw)
    except TrajectoryError as exc:
        raise TrajectoryError(f"{where}: {exc}", exc.byte_offset) from exc
    pairs = emitted.pairs()
    if any(kind == INFORMATION for kind, _ in pairs):
        raise TrajectoryError(
            f"{where}: the model must not author <information> segments"
        )
    for kind, _ in pairs[:-1]:
        if kind != THINK:
            raise TrajectoryError(
                f"{where}: only think segments may precede the action; got <{kind}>"
            )
    if pairs[-1][0] == THINK:
        raise TrajectoryError(f"{where}: turn ended without <search> or <answer>")
    return pairs


def run_search_loop(
    sample_id: str,
    initial_prompt: str,
    client: ChatClient,
    tool: SearchTool,
    cfg: AgentConfig,
) -> Trajectory:
    """Drive one client through the RL protocol: intercept <search>, execute
    it, feed results back wrapped in <information> tags, stop at <answer>."""
    messages = [{"role": "user", "content": initial_prompt}]
    pairs: list[tuple[str, str]] = []
    searches = 0
    while True:
        raw = client.complete(messages)
        turn = _parse_emission(raw, f"{sample_id}: turn {searches + 1}")
        pairs.extend(turn)
        if turn[-1][0] == ANSWER:
            return Trajectory.from_segments(sample_id, pairs)
        if searches >= cfg.max_steps:
            raise StepLimitExceeded(
                f"{sample_id}: step limit {cfg.max_steps} reached without an answer",
                partial=Trajectory.from_segments(sample_id, pairs),
            )
        query = turn[-1][1]
        info = render_information(tool.search(query, cfg.top_k), tool)
        pairs.append((INFORMATION, info))
        searches += 1
        messages.append({"role": "assistant", "content": raw})
        messages.append(
            {"role": "user", "content": f"<information>{info}</information>"}
        )


def distill_single_model(
    sample: MaskedSample, teacher: ChatClient, tool: SearchTool, cfg: AgentConfig
) -> Trajectory:
    prompt = render_rl_template(render_ramp_prompt(sample))
    return run_search_loop(sample.sample_id, prompt, teacher, tool, cfg)


def judge_filter(
    sample: MaskedSample,
    trajectory: Trajectory,
    judge: ChatClient,
    template: str = JUDGE_PROMPT,
) -> JudgeDecision:
    """Keep iff the judge rates the final answer correct against the fully
    reconstructed paragraph."""
    if trajectory.final_answer is None:
        raise ValueError(f"{trajectory.sample_id}: trajectory has no final answer")
    keep, unparseable, raw = judge_verdict(
        question=render_ramp_prompt(sample),
        target=reconstruct_paragraph(sample),
        prediction=trajectory.final_answer,
        judge=judge,
        template=template,
    )
    return JudgeDecision(keep=keep, unparseable=unparseable, raw=raw)


def self_evolve_round(
    state: DistillationState,
    samples: Iterable[MaskedSample],
    teacher: ChatClient,
    tool: SearchTool,
    cfg: AgentConfig,
    judge: ChatClient,
    out_dir: str | Path,
) -> RoundResult:
    """Synthesize with the current teacher, judge-filter, write partition
    D_{round+1}, and signal (once, at round end) if a threshold was crossed.
    Training the next teacher is the caller's job."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    partition_path = out_dir / f"partition_{state.round_index + 1:03d}.jsonl"

    kept = 0
    skipped: list[tuple[str, str]] = []
    before = state.accumulated_count
    with open(partition_path, "w", encoding="utf-8") as fh:
        for sample in samples:
            try:
                trajectory = distill_single_model(sample, teacher, tool, cfg)
            except (TrajectoryError, StepLimitExceeded, AgentProtocolError) as exc:
                logger.info("skip %s: %s", sample.sample_id, exc)
                skipped.append((sample.sample_id, str(exc)))
                continue
            except ChatClientError as exc:
                logger.warning("skip %s: client failure: %s", sample.sample_id, exc)
                skipped.append((sample.sample_id, str(exc)))
                continue
            decision = judge_filter(sample, trajectory, judge, cfg.judge_prompt)
            if not decision.keep:
                reason = "unparseable verdict" if decision.unparseable else "judged incorrect"
                skipped.append((sample.sample_id, reason))
                continue
            fh.write(
                json.dumps(trajectory_to_dict(trajectory), ensure_ascii=False) + "\n"
            )
            kept += 1

    after = before + kept
    new_state = DistillationState(
        round_index=state.round_index + 1,
        partitions=state.partitions + (str(partition_path),),
        partition_sizes=state.partition_sizes + (kept,),
        accumulated_count=after,
        thresholds=state.thresholds,
    )
    retrain = any(before < t <= after for t in state.thresholds)
    if retrain:
        logger.info(
            "round %d crossed a threshold (%d -> %d): train the teacher now",
            new_state.round_index,
            before,
            after,
        )
    return RoundResult(
        state=new_state,
        partition_path=str(partition_path),
        kept_count=kept,
        skipped=tuple(skipped),
        retrain=retrain,
    )
