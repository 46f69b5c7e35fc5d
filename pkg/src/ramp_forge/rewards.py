"""Reward and advantage arithmetic for trajectory scoring.

The format reward is 1 iff the full response parses under the tag grammar
with at least one <think> segment and exactly one <answer> segment in final
position, else 0. The answer reward is one of three modes: plain token
recall, recall with an over-length penalty, or a binary model judge. The
total is always the even split 0.5 * format + 0.5 * answer.

The penalty follows recall - alpha * min(max(log2(n_pre / (beta * n_gold)),
0), gamma) with defaults alpha=0.2, beta=8, gamma=4, where n_pre and n_gold
count tokens of the extracted answer and the gold answer under the
canonical tokenizer; it can push the answer reward below zero, and the
total is not clamped. Group advantages are reward minus group mean over
group population standard deviation; a zero-variance group is degenerate
and refuses rather than divides by zero. The clipped objective term is
min(ratio * adv, clip(ratio, 1 - eps_low, 1 + eps_high) * adv) with the
asymmetric defaults eps_low=0.2, eps_high=0.28 and no KL term.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .chat import ChatClient
from .corpus import tokenize
from .prompts import JUDGE_PROMPT, render_judge_prompt
from .trajectory import THINK, Trajectory, TrajectoryError, parse_trajectory

logger = logging.getLogger(__name__)

ANSWER_MODES = ("recall", "penalized", "judge")
FORMAT_WEIGHT = 0.5
ANSWER_WEIGHT = 0.5
DEFAULT_EPS_LOW = 0.2
DEFAULT_EPS_HIGH = 0.28


class RewardError(ValueError):
    pass


class DegenerateGroup(ValueError):
    """All rewards in a group are equal; advantages are undefined."""


@dataclass(frozen=True)
class PenaltyParams:
    alpha: float = 0.2
    beta: float = 8.0
    gamma: float = 4.0

    def __post_init__(self):
        if self.alpha < 0:
            raise RewardError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta <= 0:
            raise RewardError(f"beta must be > 0, got {self.beta}")
        if self.gamma <= 0:
            raise RewardError(f"gamma must be > 0, got {self.gamma}")


DEFAULT_PENALTY = PenaltyParams()


@dataclass(frozen=True)
class RewardBreakdown:
    format: int
    answer: float
    total: float

    @classmethod
    def combine(cls, format_score: int, answer_score: float) -> "RewardBreakdown":
        if format_score not in (0, 1):
            raise RewardError(f"format score must be 0 or 1, got {format_score}")
        if not math.isfinite(answer_score):
            raise RewardError(f"answer score must be finite, got {answer_score}")
        return cls(
            format=format_score,
            answer=answer_score,
            total=FORMAT_WEIGHT * format_score + ANSWER_WEIGHT * answer_score,
        )


@dataclass(frozen=True)
class GroupAdvantage:
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]
    eps_low: float
    eps_high: float


def _try_parse(full_response: str) -> Trajectory | None:
    try:
        return parse_trajectory(full_response)
    except TrajectoryError:
        return None


def extract_final_answer(full_response: str) -> str:
    """The <answer> text of a well-formed response, else the empty string."""
    trajectory = _try_parse(full_response)
    if trajectory is None or trajectory.final_answer is None:
        return ""
    return trajectory.final_answer


def format_reward(full_response: str) -> int:
    trajectory = _try_parse(full_response)
    if trajectory is None or trajectory.final_answer is None:
        return 0
    if not any(seg.kind == THINK for seg in trajectory.segments):
        return 0
    return 1


def token_recall(gold: str, predicted: str) -> float:
    """Multiset token overlap over the gold token count, in [0, 1]."""
    gold_tokens = tokenize(gold).tokens
    if not gold_tokens:
        raise RewardError("gold answer tokenizes to nothing")
    overlap = Counter(gold_tokens) & Counter(tokenize(predicted).tokens)
    return sum(overlap.values()) / len(gold_tokens)


def penalized_recall(
    gold: str, predicted: str, params: PenaltyParams = DEFAULT_PENALTY
) -> float:
    """Token recall minus the capped over-length penalty.

    An empty prediction has recall 0 and, having no length to punish, no
    penalty. Responses up to beta times the gold length are unpenalized;
    beyond that the log2 length ratio is charged, capped at gamma.
    """
    recall = token_recall(gold, predicted)
    n_pre = len(tokenize(predicted).tokens)
    if n_pre == 0:
        return recall
    n_gold = len(tokenize(gold).tokens)
    excess = math.log2(n_pre / (params.beta * n_gold))
    return recall - params.alpha * min(max(excess, 0.0), params.gamma)


def judge_verdict(
    question: str,
    target: str,
    prediction: str,
    judge: ChatClient,
    template: str = JUDGE_PROMPT,
) -> tuple[bool, bool, str]:
    """Ask the judge for A/B; returns (keep, unparseable, raw_output).

    Strict contract: only a bare "A" (after stripping) counts as correct.
    Anything other than "A" or "B" is flagged unparseable and treated as
    incorrect.
    """
    prompt = render_judge_prompt(question, target, prediction, template)
    raw = judge.complete([{"role": "user", "content": prompt}])
    verdict = raw.strip()
    if verdict == "A":
        return True, False, raw
    if verdict == "B":
        return False, False, raw
    logger.warning("judge returned unparseable verdict %r", raw)
    return False, True, raw


def judge_reward(
    question: str,
    gold: str,
    predicted: str,
    judge: ChatClient,
    template: str = JUDGE_PROMPT,
) -> int:
    keep, _, _ = judge_verdict(question, gold, predicted, judge, template)
    return 1 if keep else 0


def hybrid_reward(
    full_response: str,
    gold: str,
    mode: str,
    *,
    params: PenaltyParams = DEFAULT_PENALTY,
    judge: ChatClient | None = None,
    question: str = "",
) -> RewardBreakdown:
    """Evenly weighted format + answer reward for a full tagged response.

    The answer reward is computed on the extracted <answer> text; a response
    with no extractable answer scores 0 on the answer axis without
    consulting the judge.
    """
    if mode not in ANSWER_MODES:
        raise RewardError(f"mode must be one of {ANSWER_MODES}, got {mode!r}")
    if mode == "judge" and judge is None:
        raise RewardError("judge mode requires a judge client")
    fmt = format_reward(full_response)
    predicted = extract_final_answer(full_response)
    if not predicted:
        answer = 0.0
    elif mode == "recall":
        answer = token_recall(gold, predicted)
    elif mode == "penalized":
        answer = penalized_recall(gold, predicted, params)
    else:
        answer = float(judge_reward(question, gold, predicted, judge))
    return RewardBreakdown.combine(fmt, answer)


def group_advantages(
    rewards: Sequence[float],
    eps_low: float = DEFAULT_EPS_LOW,
    eps_high: float = DEFAULT_EPS_HIGH,
) -> GroupAdvantage:
    """Normalize each reward against its group: (r - mean) / population std.

    Raises DegenerateGroup when every reward is identical (the group carries
    no learning signal and the std is zero).
    """
    if len(rewards) < 2:
        raise RewardError(f"a group needs at least 2 rewards, got {len(rewards)}")
    values = tuple(float(r) for r in rewards)
    if all(v == values[0] for v in values):
        raise DegenerateGroup(
            f"all {len(values)} rewards equal {values[0]}; advantages undefined"
        )
    mean = sum(values) / len(values)
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
    return GroupAdvantage(
        rewards=values,
        advantages=tuple((v - mean) / std for v in values),
        eps_low=eps_low,
        eps_high=eps_high,
    )


def clipped_objective_term(
    ratio: float,
    advantage: float,
    eps_low: float = DEFAULT_EPS_LOW,
    eps_high: float = DEFAULT_EPS_HIGH,
) -> float:
    """min(ratio * adv, clip(ratio, 1 - eps_low, 1 + eps_high) * adv)."""
    if ratio <= 0:
        raise RewardError(f"probability ratio must be positive, got {ratio}")
    clipped = min(max(ratio, 1.0 - eps_low), 1.0 + eps_high)
    return min(ratio * advantage, clipped * advantage)
