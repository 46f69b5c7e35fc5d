import math
import random
import statistics

import pytest

from ramp_forge.rewards import (
    DegenerateGroup,
    PenaltyParams,
    RewardBreakdown,
    RewardError,
    clipped_objective_term,
    extract_final_answer,
    format_reward,
    group_advantages,
    hybrid_reward,
    judge_reward,
    judge_verdict,
    penalized_recall,
    token_recall,
)

VALID = "<think>consider</think>\n<answer>Paris</answer>"


def test_format_reward_examples():
    assert format_reward(VALID) == 1
    # an answer alone, with no think segment, is not a valid format
    assert format_reward("<answer>Paris</answer>") == 0
    # reasoning without a final answer fails too
    assert format_reward("<think>hmm</think>") == 0
    # malformed tagging fails
    assert format_reward("<think>hmm</think> loose text <answer>x</answer>") == 0
    assert format_reward("") == 0
    search_then_answer = (
        "<think>first</think>\n<search>query</search>\n"
        "<information>snippet</information>\n<answer>done</answer>"
    )
    assert format_reward(search_then_answer) == 1


def test_extract_final_answer():
    assert extract_final_answer(VALID) == "Paris"
    assert extract_final_answer("<think>only</think>") == ""
    assert extract_final_answer("broken <answer>x") == ""


def test_token_recall_worked_examples():
    gold = "Barack Obama was born in Hawaii in 1961."
    predicted = "Obama was born in 1961"
    # gold tokens: barack obama was born in hawaii in 1961 (8 with "in"
    # twice); the prediction has "in" once, so 5 of 8 are credited
    assert token_recall(gold, predicted) == pytest.approx(0.625)
    assert token_recall("Paris", "paris") == 1.0
    assert token_recall("Paris", "London") == 0.0
    # multiset: the prediction must repeat a repeated gold token to get credit
    assert token_recall("two two", "two") == 0.5
    assert token_recall("two two", "two two extra") == 1.0


def test_token_recall_rejects_empty_gold():
    with pytest.raises(RewardError, match="gold answer tokenizes to nothing"):
        token_recall("!!!", "anything")


def test_token_recall_monotone_in_prediction_tokens():
    rng = random.Random(23)
    vocab = [f"t{i}" for i in range(12)]
    for _ in range(200):
        gold = " ".join(rng.choice(vocab) for _ in range(rng.randrange(1, 10)))
        words = [rng.choice(vocab) for _ in range(rng.randrange(0, 10))]
        base = token_recall(gold, " ".join(words))
        words.append(rng.choice(vocab))
        grown = token_recall(gold, " ".join(words))
        assert grown >= base
        assert 0.0 <= grown <= 1.0


def test_penalized_recall_examples():
    gold = "alpha beta gamma"  # 3 gold tokens, beta * n_gold = 24
    exact = "alpha beta gamma"
    assert penalized_recall(gold, exact) == 1.0

    # at exactly beta * n_gold tokens the log2 ratio is 0: no penalty
    at_limit = "alpha beta gamma " + " ".join(["pad"] * 21)
    assert len(at_limit.split()) == 24
    assert penalized_recall(gold, at_limit) == 1.0

    # doubling past the limit charges alpha * 1
    doubled = "alpha beta gamma " + " ".join(["pad"] * 45)
    assert len(doubled.split()) == 48
    assert penalized_recall(gold, doubled) == pytest.approx(1.0 - 0.2, abs=1e-12)

    # the penalty saturates at alpha * gamma no matter the length
    absurd = "alpha beta gamma " + " ".join(["pad"] * 3000)
    assert penalized_recall(gold, absurd) == pytest.approx(1.0 - 0.8, abs=1e-12)

    # zero-token prediction: recall 0, no length to punish
    assert penalized_recall(gold, "") == 0.0
    assert penalized_recall(gold, "...") == 0.0


def test_penalized_recall_can_go_negative():
    gold = "alpha"
    junk = " ".join(["pad"] * 4096)  # log2(4096/8) = 9, capped at gamma=4
    assert penalized_recall(gold, junk) == pytest.approx(-0.8, abs=1e-12)


def test_penalized_recall_custom_params():
    gold = "alpha beta"
    pred = "alpha beta " + " ".join(["pad"] * 14)  # 16 tokens, ratio 16/(2*2)=4
    params = PenaltyParams(alpha=0.5, beta=2.0, gamma=10.0)
    assert penalized_recall(gold, pred, params) == pytest.approx(1.0 - 0.5 * 2.0)
    with pytest.raises(RewardError, match="alpha"):
        PenaltyParams(alpha=-0.1)
    with pytest.raises(RewardError, match="beta"):
        PenaltyParams(beta=0)
    with pytest.raises(RewardError, match="gamma"):
        PenaltyParams(gamma=-1)


def test_distractor_padding_lowers_penalized_but_not_recall():
    gold = "Eastern Kentucky University"
    honest = "Eastern Kentucky University"
    padded = honest + " " + " ".join(f"filler{i}" for i in range(1000))
    assert token_recall(gold, padded) == token_recall(gold, honest) == 1.0
    assert penalized_recall(gold, padded) < penalized_recall(gold, honest)


class _FixedJudge:
    def __init__(self, reply):
        self.reply = reply
        self.prompts = []

    def complete(self, messages):
        self.prompts.append(messages[-1]["content"])
        return self.reply


def test_judge_verdict_strictness():
    assert judge_verdict("q", "t", "p", _FixedJudge("A")) == (True, False, "A")
    assert judge_verdict("q", "t", "p", _FixedJudge(" A \n")) == (
        True,
        False,
        " A \n",
    )
    assert judge_verdict("q", "t", "p", _FixedJudge("B")) == (False, False, "B")
    keep, unparseable, raw = judge_verdict("q", "t", "p", _FixedJudge("Correct."))
    assert (keep, unparseable, raw) == (False, True, "Correct.")
    keep, unparseable, _ = judge_verdict("q", "t", "p", _FixedJudge("A."))
    assert (keep, unparseable) == (False, True)


def test_judge_reward_and_prompt_contents():
    judge = _FixedJudge("A")
    assert judge_reward("What city?", "Paris", "Paris, France", judge) == 1
    prompt = judge.prompts[0]
    assert (
        "Question: What city?\nStandard Answer: Paris\n"
        "Predicted Answer: Paris, France\n" in prompt
    )
    assert prompt.endswith("only return A or B, without adding any other text.")
    assert judge_reward("q", "t", "p", _FixedJudge("B")) == 0


def test_hybrid_reward_even_split():
    gold = "Paris"
    out = hybrid_reward(VALID, gold, "recall")
    assert out == RewardBreakdown(format=1, answer=1.0, total=1.0)

    partial = "<think>x</think>\n<answer>Paris maybe London</answer>"
    out = hybrid_reward(partial, "Paris London", "recall")
    assert out.format == 1
    assert out.answer == 1.0
    out = hybrid_reward(partial, "Paris Rome", "recall")
    assert out.answer == 0.5
    assert out.total == 0.5 * 1 + 0.5 * 0.5


def test_hybrid_reward_empty_prediction_skips_judge():
    class Exploder:
        def complete(self, messages):
            raise AssertionError("judge must not be consulted")

    out = hybrid_reward("<think>no answer</think>", "gold", "judge", judge=Exploder())
    assert out == RewardBreakdown(format=0, answer=0.0, total=0.0)


def test_hybrid_reward_judge_mode():
    out = hybrid_reward(VALID, "Paris", "judge", judge=_FixedJudge("A"), question="q")
    assert out == RewardBreakdown(format=1, answer=1.0, total=1.0)
    out = hybrid_reward(VALID, "Paris", "judge", judge=_FixedJudge("B"), question="q")
    assert out == RewardBreakdown(format=1, answer=0.0, total=0.5)


def test_hybrid_reward_penalized_is_unclamped():
    long_answer = "Paris " + " ".join(["pad"] * 4095)
    response = f"<think>x</think>\n<answer>{long_answer}</answer>"
    out = hybrid_reward(response, "Paris", "penalized")
    assert out.format == 1
    assert out.answer == pytest.approx(1.0 - 0.8, abs=1e-12)
    assert out.total == pytest.approx(0.5 + 0.5 * 0.2, abs=1e-12)


def test_hybrid_reward_validation():
    with pytest.raises(RewardError, match="mode must be one of"):
        hybrid_reward(VALID, "g", "exactmatch")
    with pytest.raises(RewardError, match="requires a judge"):
        hybrid_reward(VALID, "g", "judge")


def test_group_advantages_worked_example():
    group = group_advantages([1.0, 1.0, 0.0, 0.0])
    assert group.advantages == (1.0, 1.0, -1.0, -1.0)
    assert group.rewards == (1.0, 1.0, 0.0, 0.0)
    assert group.eps_low == 0.2
    assert group.eps_high == 0.28


def test_group_advantages_mean_zero_unit_std():
    rng = random.Random(4)
    for _ in range(100):
        n = rng.randrange(2, 9)
        rewards = [rng.uniform(-2, 2) for _ in range(n)]
        if all(r == rewards[0] for r in rewards):
            continue
        adv = group_advantages(rewards).advantages
        assert sum(adv) == pytest.approx(0.0, abs=1e-9)
        assert statistics.pstdev(adv) == pytest.approx(1.0, abs=1e-9)
        top = max(range(n), key=lambda i: rewards[i])
        assert adv[top] == max(adv)


def test_group_advantages_degenerate_and_small():
    with pytest.raises(DegenerateGroup, match="advantages undefined"):
        group_advantages([0.5, 0.5, 0.5])
    with pytest.raises(RewardError, match="at least 2"):
        group_advantages([1.0])
    # nearly equal is not degenerate
    group = group_advantages([0.5, 0.5 + 1e-9])
    assert group.advantages[1] > 0


def test_clipped_objective_worked_examples():
    # unclipped region: ratio inside [0.8, 1.28]
    assert clipped_objective_term(1.0, 2.0) == 2.0
    # positive advantage clips high ratios at 1.28
    assert clipped_objective_term(2.0, 1.0) == 1.28
    # negative advantage: min picks the unclipped arm for low ratios
    assert clipped_objective_term(0.5, -1.0) == -0.8


def test_clipped_objective_matches_reference_grid():
    def reference(ratio, adv, lo, hi):
        clipped = min(max(ratio, 1 - lo), 1 + hi)
        return min(ratio * adv, clipped * adv)

    rng = random.Random(77)
    for _ in range(500):
        ratio = rng.uniform(0.01, 3.0)
        adv = rng.uniform(-2.0, 2.0)
        assert clipped_objective_term(ratio, adv) == reference(ratio, adv, 0.2, 0.28)

    with pytest.raises(RewardError, match="positive"):
        clipped_objective_term(0.0, 1.0)
    with pytest.raises(RewardError, match="positive"):
        clipped_objective_term(-0.5, 1.0)


def test_clipped_objective_never_exceeds_unclipped_gain():
    rng = random.Random(13)
    for _ in range(300):
        ratio = rng.uniform(0.01, 3.0)
        adv = rng.uniform(-2.0, 2.0)
        assert clipped_objective_term(ratio, adv) <= ratio * adv + 1e-15


def test_reward_breakdown_validation():
    with pytest.raises(RewardError, match="format score"):
        RewardBreakdown.combine(2, 0.5)
    with pytest.raises(RewardError, match="finite"):
        RewardBreakdown.combine(1, float("inf"))
    out = RewardBreakdown.combine(1, -0.3)
    assert out.total == pytest.approx(0.5 - 0.15, abs=1e-12)
