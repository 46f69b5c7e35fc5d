"""Salient-span extraction and mask-sample generation.

A mask sample replaces k in [1, 4] salient spans of a document with the
literal token "[mask]"; the removed surfaces are kept, in document order,
as the gold spans. Substituting them back must reconstruct the original
text byte for byte.
"""

from __future__ import annotations

import json
import logging
import math
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .corpus import Document, DocumentStore, tokenize

logger = logging.getLogger(__name__)

MASK_TOKEN = "[mask]"
FILL_INSTRUCTION = (
    "Fill in all the [mask] and output the whole paragraph "
    "without changing its format."
)
CATEGORIES = ("entity", "date", "ontology", "term", "numeric")
MIN_K = 1
MAX_K = 4


class MaskingError(ValueError):
    pass


@dataclass(frozen=True)
class SalientSpan:
    byte_range: tuple[int, int]
    surface: str
    category: str


@dataclass(frozen=True)
class MaskedSample:
    sample_id: str
    doc_id: str
    context: str
    gold_spans: tuple[str, ...]
    k: int
    strategy: str
    seed: int

    def __post_init__(self):
        if not MIN_K <= self.k <= MAX_K:
            raise MaskingError(f"k must satisfy 0 < k < 5, got {self.k}")
        if len(self.gold_spans) != self.k:
            raise MaskingError(
                f"{self.sample_id}: {len(self.gold_spans)} gold spans for k={self.k}"
            )
        if self.context.count(MASK_TOKEN) != self.k:
            raise MaskingError(
                f"{self.sample_id}: context has {self.context.count(MASK_TOKEN)} "
                f"mask tokens for k={self.k}"
            )


class SpanExtractor(Protocol):
    def __call__(self, doc: Document) -> Iterable[SalientSpan]: ...


# A scorer rates how hard a span is to recover from the given context (the
# document with that span and all previously chosen spans masked). Higher
# means harder; must be deterministic and non-negative.
SpanScorer = Callable[[str, str], float]


class HeuristicSpanExtractor:
    """Entities as runs of two or more adjacent capitalized tokens (single
    space between them), dates as standalone four-digit tokens in
    [1000, 2999]."""

    def __call__(self, doc: Document) -> list[SalientSpan]:
        data = doc.text.encode("utf-8")
        seq = tokenize(doc.text)
        surfaces = [data[s:e].decode("utf-8") for s, e in seq.source_spans]
        spans: list[SalientSpan] = []

        run_start: int | None = None
        prev_end = 0
        run_len = 0

        def flush(upto: int) -> None:
            if run_start is not None and run_len >= 2:
                spans.append(
                    SalientSpan(
                        byte_range=(run_start, upto),
                        surface=data[run_start:upto].decode("utf-8"),
                        category="entity",
                    )
                )

        for (start, end), surface in zip(seq.source_spans, surfaces):
            capitalized = surface[:1].isupper()
            adjacent = data[prev_end:start] == b" "
            if capitalized and run_start is not None and adjacent:
                run_len += 1
            elif capitalized:
                flush(prev_end)
                run_start, run_len = start, 1
            else:
                flush(prev_end)
                run_start, run_len = None, 0
            prev_end = end
        flush(prev_end)

        for (start, end), surface in zip(seq.source_spans, surfaces):
            if len(surface) == 4 and surface.isdigit() and 1000 <= int(surface) <= 2999:
                spans.append(SalientSpan((start, end), surface, "date"))
        spans.sort(key=lambda s: s.byte_range)
        return spans


def extract_salient_spans(
    doc: Document, extractor: SpanExtractor | None = None
) -> list[SalientSpan]:
    """Verified, non-overlapping candidate spans in document order.

    Candidates whose surface does not match the document bytes at their
    offset (or with an unknown category) are dropped with a warning.
    Overlaps keep the earlier span; at equal starts, the longer one.
    """
    extractor = extractor or HeuristicSpanExtractor()
    data = doc.text.encode("utf-8")
    verified: list[SalientSpan] = []
    for span in extractor(doc):
        start, end = span.byte_range
        ok = 0 <= start < end <= len(data) and span.category in CATEGORIES
        if ok:
            try:
                ok = data[start:end].decode("utf-8") == span.surface
            except UnicodeDecodeError:
                ok = False
        if not ok:
            logger.warning(
                "doc %s: rejected span %r at %s", doc.doc_id, span.surface, span.byte_range
            )
            continue
        verified.append(span)

    verified.sort(key=lambda s: (s.byte_range[0], -(s.byte_range[1] - s.byte_range[0])))
    kept: list[SalientSpan] = []
    last_end = 0
    for span in verified:
        if span.byte_range[0] >= last_end:
            kept.append(span)
            last_end = span.byte_range[1]
    return kept


def _check_spans(doc: Document, spans: Sequence[SalientSpan], k: int) -> None:
    if not MIN_K <= k <= MAX_K:
        raise MaskingError(f"k must satisfy 0 < k < 5, got {k}")
    if k > len(spans):
        raise MaskingError(
            f"doc {doc.doc_id}: k={k} exceeds the {len(spans)} available spans"
        )
    if MASK_TOKEN in doc.text:
        raise MaskingError(
            f"doc {doc.doc_id}: text already contains {MASK_TOKEN!r}; "
            "reconstruction would be ambiguous"
        )
    last_end = 0
    for span in spans:
        if span.byte_range[0] < last_end:
            raise MaskingError(f"doc {doc.doc_id}: overlapping spans")
        last_end = span.byte_range[1]


def _build_sample(
    doc: Document,
    spans: Sequence[SalientSpan],
    chosen: Sequence[int],
    strategy: str,
    seed: int,
) -> MaskedSample:
    data = doc.text.encode("utf-8")
    mask = MASK_TOKEN.encode("utf-8")
    out = bytearray()
    cursor = 0
    golds: list[str] = []
    for i in chosen:
        start, end = spans[i].byte_range
        out += data[cursor:start]
        out += mask
        golds.append(spans[i].surface)
        cursor = end
    out += data[cursor:]
    return MaskedSample(
        sample_id=f"{doc.doc_id}:{strategy}:k{len(chosen)}:s{seed}",
        doc_id=doc.doc_id,
        context=out.decode("utf-8"),
        gold_spans=tuple(golds),
        k=len(chosen),
        strategy=strategy,
        seed=seed,
    )


def select_masks_random(
    doc: Document, spans: Sequence[SalientSpan], k: int, seed: int
) -> MaskedSample:
    """Uniformly choose k spans to mask; deterministic given the seed."""
    _check_spans(doc, spans, k)
    chosen = sorted(random.Random(seed).sample(range(len(spans)), k))
    return _build_sample(doc, spans, chosen, "random", seed)


def _mask_context(doc: Document, spans: Sequence[SalientSpan], chosen: Sequence[int]) -> str:
    data = doc.text.encode("utf-8")
    mask = MASK_TOKEN.encode("utf-8")
    out = bytearray()
    cursor = 0
    for i in sorted(chosen):
        start, end = spans[i].byte_range
        out += data[cursor:start]
        out += mask
        cursor = end
    out += data[cursor:]
    return out.decode("utf-8")


def select_masks_ppl_greedy(
    doc: Document, spans: Sequence[SalientSpan], k: int, scorer: SpanScorer
) -> MaskedSample:
    """Pick k spans one at a time, each round masking the span the scorer
    rates hardest against the current partially-masked context (the
    candidate itself is masked in the context it is scored on). Ties go to
    the earlier span. Greedy selection has no randomness; seed is 0.
    """
    _check_spans(doc, spans, k)
    selected: list[int] = []
    for _ in range(k):
        best_i: int | None = None
        best_score = -math.inf
        for i in range(len(spans)):
            if i in selected:
                continue
            context = _mask_context(doc, spans, selected + [i])
            try:
                score = scorer(context, spans[i].surface)
            except Exception as exc:
                raise MaskingError(
                    f"scorer failed on span {spans[i].surface!r} at byte "
                    f"{spans[i].byte_range[0]}: {exc}"
                ) from exc
            if not math.isfinite(score) or score < 0:
                raise MaskingError(
                    f"scorer returned {score!r} for span {spans[i].surface!r}; "
                    "scores must be finite and non-negative"
                )
            if score > best_score:
                best_i, best_score = i, score
        assert best_i is not None
        selected.append(best_i)
    return _build_sample(doc, spans, sorted(selected), "ppl_greedy", 0)


class CorpusFrequencyScorer:
    """Span difficulty as rarity: -ln((c + 0.5) / (T + 0.5)) where c is the
    corpus count of the span's rarest token and T the total token count."""

    def __init__(self, store: DocumentStore):
        counts: Counter[str] = Counter()
        for doc in store:
            counts.update(tokenize(doc.title + " " + doc.text).tokens)
        self._counts = counts
        self._total = sum(counts.values())

    def __call__(self, masked_context: str, surface: str) -> float:
        tokens = tokenize(surface).tokens
        if not tokens:
            return 0.0
        rarest = min(self._counts.get(t, 0) for t in tokens)
        return -math.log((rarest + 0.5) / (self._total + 0.5))


def render_ramp_prompt(sample: MaskedSample) -> str:
    return sample.context + "\n" + FILL_INSTRUCTION


def reconstruct_paragraph(sample: MaskedSample) -> str:
    """Substitute the gold spans back into the context, in order."""
    parts = sample.context.split(MASK_TOKEN)
    out: list[str] = []
    for part, gold in zip(parts, sample.gold_spans):
        out.append(part)
        out.append(gold)
    out.append(parts[-1])
    return "".join(out)


def sample_to_dict(sample: MaskedSample) -> dict:
    return {
        "sample_id": sample.sample_id,
        "doc_id": sample.doc_id,
        "context": sample.context,
        "gold_spans": list(sample.gold_spans),
        "k": sample.k,
        "strategy": sample.strategy,
        "seed": sample.seed,
    }


def write_masked_samples(samples: Iterable[MaskedSample], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_dict(sample), ensure_ascii=False) + "\n")
            count += 1
    return count


def read_masked_samples(path: str | Path) -> list[MaskedSample]:
    out: list[MaskedSample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
                sample = MaskedSample(
                    sample_id=obj["sample_id"],
                    doc_id=obj["doc_id"],
                    context=obj["context"],
                    gold_spans=tuple(obj["gold_spans"]),
                    k=obj["k"],
                    strategy=obj["strategy"],
                    seed=obj["seed"],
                )
            except json.JSONDecodeError as exc:
                raise MaskingError(f"{where}: invalid JSON: {exc}") from exc
            except (KeyError, TypeError) as exc:
                raise MaskingError(f"{where}: malformed record: {exc}") from exc
            except MaskingError as exc:
                raise MaskingError(f"{where}: {exc}") from exc
            out.append(sample)
    return out
