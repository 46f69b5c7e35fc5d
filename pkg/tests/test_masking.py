import json
import random

import pytest

from ramp_forge.corpus import Document
from ramp_forge.masking import (
    FILL_INSTRUCTION,
    MASK_TOKEN,
    CorpusFrequencyScorer,
    HeuristicSpanExtractor,
    MaskedSample,
    MaskingError,
    SalientSpan,
    extract_salient_spans,
    read_masked_samples,
    reconstruct_paragraph,
    render_ramp_prompt,
    sample_to_dict,
    select_masks_ppl_greedy,
    select_masks_random,
    write_masked_samples,
)


def spans_of(doc):
    return extract_salient_spans(doc, HeuristicSpanExtractor())


def test_extractor_finds_entities_and_dates(case_study_doc):
    spans = spans_of(case_study_doc)
    assert [s.surface for s in spans] == [
        "David Hoelscher David Henry Hoelscher",
        "1975",
        "National Football League",
        "Washington Redskins",
        "1998",
        "Eastern Kentucky University",
    ]
    categories = {s.surface: s.category for s in spans}
    assert categories["1998"] == "date"
    assert categories["Washington Redskins"] == "entity"


def test_extractor_spans_are_sorted_and_disjoint(case_study_doc):
    spans = spans_of(case_study_doc)
    data = case_study_doc.text.encode("utf-8")
    prev_end = 0
    for s in spans:
        start, end = s.byte_range
        assert start >= prev_end
        assert data[start:end].decode("utf-8") == s.surface
        prev_end = end


def test_extractor_requires_two_capitalized_tokens():
    doc = Document("d", "", "It was Paris that hosted the games in 2024.")
    assert [s.surface for s in spans_of(doc)] == ["2024"]


def test_extractor_year_bounds():
    doc = Document("d", "", "Codes 0999 and 3000 differ from 1000 and 2999.")
    assert [s.surface for s in spans_of(doc)] == ["1000", "2999"]


def test_overlapping_candidate_spans_resolved_earliest_then_longest():
    def overlapper(doc):
        return [
            SalientSpan((0, 5), "Alpha", "entity"),
            SalientSpan((0, 10), "Alpha Beta", "entity"),
            SalientSpan((6, 10), "Beta", "entity"),
            SalientSpan((11, 16), "Gamma", "entity"),
        ]

    doc = Document("d", "", "Alpha Beta Gamma")
    spans = extract_salient_spans(doc, overlapper)
    assert [s.surface for s in spans] == ["Alpha Beta", "Gamma"]


def test_bad_extractor_output_is_dropped_with_warning(caplog):
    def liar(doc):
        return [
            SalientSpan((0, 5), "WRONG", "entity"),
            SalientSpan((50, 60), "x", "entity"),
            SalientSpan((6, 10), "Beta", "weird-category"),
            SalientSpan((11, 16), "Gamma", "entity"),
        ]

    doc = Document("d", "", "Alpha Beta Gamma")
    with caplog.at_level("WARNING"):
        spans = extract_salient_spans(doc, liar)
    assert [s.surface for s in spans] == ["Gamma"]
    assert len([r for r in caplog.records if "rejected span" in r.message]) == 3


def test_random_selection_laws(case_study_doc):
    spans = spans_of(case_study_doc)
    assert len(spans) >= 4
    for seed in range(30):
        for k in range(1, 5):
            sample = select_masks_random(case_study_doc, spans, k, seed=seed)
            assert sample.k == k
            assert len(sample.gold_spans) == k
            assert sample.context.count(MASK_TOKEN) == k
            assert sample.doc_id == case_study_doc.doc_id
            assert sample.sample_id == f"hoelscher:random:k{k}:s{seed}"
            assert reconstruct_paragraph(sample) == case_study_doc.text
            for gold in sample.gold_spans:
                assert gold
                assert gold != MASK_TOKEN


def test_random_selection_golds_follow_document_order(case_study_doc):
    spans = spans_of(case_study_doc)
    order = {s.surface: i for i, s in enumerate(spans)}
    for seed in range(20):
        sample = select_masks_random(case_study_doc, spans, 3, seed=seed)
        positions = [order[g] for g in sample.gold_spans]
        assert positions == sorted(positions)


def test_random_selection_is_seed_deterministic(case_study_doc):
    spans = spans_of(case_study_doc)
    a = select_masks_random(case_study_doc, spans, 3, seed=11)
    b = select_masks_random(case_study_doc, spans, 3, seed=11)
    assert a == b
    c = select_masks_random(case_study_doc, spans, 3, seed=12)
    assert a.sample_id != c.sample_id


def test_random_selection_covers_all_spans_across_seeds():
    doc = Document(
        "d",
        "",
        "Alpha One and Beta Two and Gamma Three and Delta Four met in 1998.",
    )
    spans = spans_of(doc)
    assert len(spans) == 5
    seen = set()
    for seed in range(200):
        sample = select_masks_random(doc, spans, 1, seed=seed)
        seen.add(sample.gold_spans[0])
    assert seen == {s.surface for s in spans}


def test_k_out_of_range_rejected(case_study_doc):
    spans = spans_of(case_study_doc)
    for bad_k in (0, 5, -1):
        with pytest.raises(MaskingError, match="k must satisfy 0 < k < 5"):
            select_masks_random(case_study_doc, spans, bad_k, seed=1)


def test_k_exceeding_span_count_rejected():
    doc = Document("d", "", "Alpha Beta spoke.")
    spans = spans_of(doc)
    assert len(spans) == 1
    with pytest.raises(MaskingError, match="exceeds the 1 available"):
        select_masks_random(doc, spans, 2, seed=1)


def test_document_already_containing_mask_token_rejected():
    doc = Document("d", "", "Alpha Beta wrote [mask] already in 1998.")
    spans = spans_of(doc)
    with pytest.raises(MaskingError, match="already contains"):
        select_masks_random(doc, spans, 1, seed=1)


def test_ppl_greedy_static_scores_pick_top_k():
    # with a context-independent scorer, greedy selection reduces to the
    # k highest-scoring spans, which gives an independent oracle
    rng = random.Random(17)
    doc = Document(
        "d",
        "",
        "Alpha One met Beta Two and Gamma Three near Delta Four in 1998 and 2001.",
    )
    spans = spans_of(doc)
    assert len(spans) == 6
    for _ in range(40):
        weights = {s.surface: rng.random() * 10 for s in spans}
        for k in range(1, 5):
            sample = select_masks_ppl_greedy(
                doc, spans, k, lambda context, surface: weights[surface]
            )
            ranked = sorted(range(len(spans)), key=lambda i: -weights[spans[i].surface])
            expected = [spans[i].surface for i in sorted(ranked[:k])]
            assert list(sample.gold_spans) == expected
            assert sample.strategy == "ppl_greedy"
            assert sample.seed == 0


def test_ppl_greedy_rescores_each_round():
    doc = Document("d", "", "Alpha One and Beta Two and Gamma Three sang.")
    spans = spans_of(doc)
    assert [s.surface for s in spans] == ["Alpha One", "Beta Two", "Gamma Three"]

    def scorer(context, surface):
        # Beta Two wins round one. In round two the context carries two
        # mask tokens, Alpha One's score collapses, and Gamma Three
        # overtakes it, so the pair differs from the static top two.
        masks = context.count(MASK_TOKEN)
        if surface == "Beta Two":
            return 5.0
        if surface == "Alpha One":
            return 3.0 if masks == 1 else 1.0
        return 2.0

    sample = select_masks_ppl_greedy(doc, spans, 2, scorer)
    assert sample.gold_spans == ("Beta Two", "Gamma Three")


def test_ppl_greedy_scores_candidate_inside_masked_context():
    doc = Document("d", "", "Alpha One and Beta Two spoke.")
    spans = spans_of(doc)
    seen = []

    def scorer(context, surface):
        seen.append((surface, context))
        return 1.0

    select_masks_ppl_greedy(doc, spans, 1, scorer)
    for surface, context in seen:
        assert surface not in context
        assert context.count(MASK_TOKEN) == 1


def test_ppl_greedy_tie_prefers_earlier_span():
    doc = Document("d", "", "Alpha One and Beta Two spoke.")
    spans = spans_of(doc)
    sample = select_masks_ppl_greedy(doc, spans, 1, lambda c, s: 1.0)
    assert sample.gold_spans == ("Alpha One",)


def test_ppl_greedy_scorer_failure_names_span():
    doc = Document("d", "", "Alpha One and Beta Two spoke.")
    spans = spans_of(doc)

    def broken(context, surface):
        if surface == "Beta Two":
            raise ValueError("backend down")
        return 1.0

    with pytest.raises(MaskingError, match=r"'Beta Two' at byte 14.*backend down"):
        select_masks_ppl_greedy(doc, spans, 1, broken)

    with pytest.raises(MaskingError, match="finite"):
        select_masks_ppl_greedy(doc, spans, 1, lambda c, s: float("nan"))
    with pytest.raises(MaskingError, match="non-negative"):
        select_masks_ppl_greedy(doc, spans, 1, lambda c, s: -2.0)


def test_corpus_frequency_scorer(tiny_store):
    scorer = CorpusFrequencyScorer(tiny_store)
    common = scorer("ctx", "the")
    rare = scorer("ctx", "Hoelscher")
    assert rare > common >= 0.0
    assert scorer("ctx", "the") == common
    # multi-token spans score by their rarest token
    assert scorer("ctx", "the Hoelscher") == rare
    assert scorer("ctx", "") == 0.0


def test_render_ramp_prompt(case_study_sample):
    prompt = render_ramp_prompt(case_study_sample)
    assert prompt == case_study_sample.context + "\n" + FILL_INSTRUCTION
    # the instruction itself contains one literal mask token
    assert prompt.count(MASK_TOKEN) == case_study_sample.k + 1


def test_masked_sample_jsonl_round_trip(tmp_path, case_study_doc):
    spans = spans_of(case_study_doc)
    samples = [
        select_masks_random(case_study_doc, spans, k, seed=7) for k in (1, 2, 3)
    ]
    path = tmp_path / "samples.jsonl"
    write_masked_samples(samples, path)
    loaded = read_masked_samples(path)
    assert loaded == samples
    assert sample_to_dict(loaded[0])["k"] == 1


def test_read_masked_samples_reports_line(tmp_path, case_study_doc):
    spans = spans_of(case_study_doc)
    sample = select_masks_random(case_study_doc, spans, 1, seed=7)
    path = tmp_path / "samples.jsonl"
    path.write_text(
        json.dumps(sample_to_dict(sample)) + "\n{broken\n", encoding="utf-8"
    )
    with pytest.raises(MaskingError, match=":2"):
        read_masked_samples(path)


def test_masked_sample_validates_its_own_shape():
    with pytest.raises(MaskingError, match="k must satisfy"):
        MaskedSample(
            sample_id="x",
            doc_id="d",
            context="a [mask]",
            gold_spans=("b",),
            k=0,
            strategy="random",
            seed=1,
        )
    with pytest.raises(MaskingError, match="gold spans"):
        MaskedSample(
            sample_id="x",
            doc_id="d",
            context="a [mask]",
            gold_spans=("b", "c"),
            k=1,
            strategy="random",
            seed=1,
        )
    with pytest.raises(MaskingError, match="mask tokens"):
        MaskedSample(
            sample_id="x",
            doc_id="d",
            context="no masks here",
            gold_spans=("b",),
            k=1,
            strategy="random",
            seed=1,
        )
