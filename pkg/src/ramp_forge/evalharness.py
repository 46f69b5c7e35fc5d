"""QA evaluation harness.

Runs any chat agent over a QA set through the RL template and the search
loop, scoring each answer by token recall against the best-matching gold
alias. Format failures (malformed output, step limit) score 0; transport
failures are excluded from the mean and surfaced separately.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .chat import ChatClient, ChatClientError
from .corpus import tokenize
from .retrieval import SearchTool
from .rewards import token_recall
from .synthesis import AgentConfig, AgentProtocolError, StepLimitExceeded, run_search_loop
from .trajectory import TrajectoryError, render_rl_template

logger = logging.getLogger(__name__)


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class QAExample:
    qid: str
    question: str
    gold_answers: tuple[str, ...]


@dataclass(frozen=True)
class ExampleResult:
    recall: float
    search_count: int
    format_ok: bool


@dataclass(frozen=True)
class EvalReport:
    dataset_name: str
    n: int
    mean_recall: float
    per_example: dict[str, ExampleResult]
    errored: dict[str, str]


def load_qa(path: str | Path) -> list[QAExample]:
    """Load {"id", "question", "answers"} JSONL, order-preserving.

    Lenient per line: invalid lines are logged with their line number and
    skipped (an eval set with one bad row should still run); a file with
    zero valid examples is an error. A gold alias that tokenizes to nothing
    is dropped; an example with no scorable alias is invalid.
    """
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise EvalError(f"cannot read QA file {path}: {exc}") from exc

    examples: list[QAExample] = []
    seen: set[str] = set()
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            problem = None
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                obj, problem = None, f"invalid JSON: {exc}"
            if problem is None:
                qid = obj.get("id") if isinstance(obj, dict) else None
                question = obj.get("question") if isinstance(obj, dict) else None
                answers = obj.get("answers") if isinstance(obj, dict) else None
                if not isinstance(qid, str) or not qid:
                    problem = "missing or empty id"
                elif qid in seen:
                    problem = f"duplicate id {qid!r}"
                elif not isinstance(question, str) or not question.strip():
                    problem = "missing or empty question"
                elif not isinstance(answers, list) or not answers:
                    problem = "missing or empty answers"
                elif not all(isinstance(a, str) for a in answers):
                    problem = "answers must be strings"
            if problem is None:
                scorable = tuple(a for a in answers if tokenize(a).tokens)
                if not scorable:
                    problem = "no gold alias tokenizes to anything"
            if problem is not None:
                logger.warning("%s:%d: %s (line skipped)", path, lineno, problem)
                continue
            seen.add(qid)
            examples.append(
                QAExample(qid=qid, question=question, gold_answers=scorable)
            )
    if not examples:
        raise EvalError(f"{path}: no valid QA examples")
    return examples


def evaluate_agent(
    dataset: Sequence[QAExample],
    agent: ChatClient,
    tool: SearchTool,
    cfg: AgentConfig,
    dataset_name: str = "qa",
) -> EvalReport:
    per_example: dict[str, ExampleResult] = {}
    errored: dict[str, str] = {}
    for example in dataset:
        try:
            trajectory = run_search_loop(
                example.qid,
                render_rl_template(example.question),
                agent,
                tool,
                cfg,
            )
        except StepLimitExceeded as exc:
            per_example[example.qid] = ExampleResult(
                recall=0.0,
                search_count=exc.partial.search_count,
                format_ok=False,
            )
            continue
        except (TrajectoryError, AgentProtocolError) as exc:
            logger.info("%s: format failure: %s", example.qid, exc)
            per_example[example.qid] = ExampleResult(
                recall=0.0, search_count=0, format_ok=False
            )
            continue
        except ChatClientError as exc:
            logger.warning("%s: client failure: %s", example.qid, exc)
            errored[example.qid] = str(exc)
            continue
        answer = trajectory.final_answer or ""
        recall = max(
            token_recall(gold, answer) for gold in example.gold_answers
        )
        per_example[example.qid] = ExampleResult(
            recall=recall,
            search_count=trajectory.search_count,
            format_ok=True,
        )
    n = len(per_example)
    mean = sum(r.recall for r in per_example.values()) / n if n else 0.0
    return EvalReport(
        dataset_name=dataset_name,
        n=n,
        mean_recall=mean,
        per_example=per_example,
        errored=errored,
    )


def report_to_dict(report: EvalReport) -> dict:
    return {
        "dataset_name": report.dataset_name,
        "n": report.n,
        "mean_recall": report.mean_recall,
        "per_example": {
            qid: {
                "recall": r.recall,
                "search_count": r.search_count,
                "format_ok": r.format_ok,
            }
            for qid, r in report.per_example.items()
        },
        "errored": dict(report.errored),
    }


def render_report(report: EvalReport, format: str = "table") -> str:
    if format == "json":
        return json.dumps(
            report_to_dict(report),
            sort_keys=True,
            ensure_ascii=False,
            separators=(",", ":"),
        )
    if format != "table":
        raise EvalError(f"format must be table or json, got {format!r}")
    mean = f"{report.mean_recall * 100:.2f}" if report.n else "—"
    name_width = max(len("dataset"), len(report.dataset_name))
    header = f"{'dataset':<{name_width}}  {'n':>4}  recall"
    row = f"{report.dataset_name:<{name_width}}  {report.n:>4}  {mean}"
    lines = [header, row]
    if report.errored:
        lines.append(f"errored: {len(report.errored)}")
    return "\n".join(lines)
