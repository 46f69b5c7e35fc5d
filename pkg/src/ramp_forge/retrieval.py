"""Okapi BM25 retrieval over an in-memory inverted index.

Scores use the standard smoothed idf, ln((N - df + 0.5)/(df + 0.5) + 1),
and tf saturation tf*(k1+1)/(tf + k1*(1 - b + b*len/avglen)). Ties break
by ascending doc_id so rankings are total and reproducible. Snippets are
precomputed at build time so the index alone can serve queries.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from .corpus import DocumentStore, tokenize

logger = logging.getLogger(__name__)

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75
DEFAULT_TOP_K = 5
SNIPPET_BYTES = 300


class RetrievalError(ValueError):
    pass


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    score: float
    snippet: str


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_count: int
    k1: float
    b: float
    titles: dict[str, str]
    snippets: dict[str, str]

    def check(self) -> None:
        """Assert the structural invariants; used by tests and load_index."""
        for term, plist in self.postings.items():
            for doc_id, tf in plist:
                if doc_id not in self.doc_lengths:
                    raise RetrievalError(
                        f"postings for {term!r} reference unknown doc {doc_id!r}"
                    )
                if tf < 1:
                    raise RetrievalError(f"non-positive tf for {term!r}/{doc_id!r}")
        if self.doc_count != len(self.doc_lengths):
            raise RetrievalError("doc_count does not match doc_lengths")
        if self.doc_lengths:
            mean = sum(self.doc_lengths.values()) / len(self.doc_lengths)
            if abs(mean - self.avg_doc_length) > 1e-9:
                raise RetrievalError("avg_doc_length does not match doc_lengths")


def make_snippet(text: str, max_bytes: int = SNIPPET_BYTES) -> str:
    """Byte-bounded prefix of ``text`` that never splits a token or a UTF-8
    sequence; trailing whitespace stripped."""
    data = text.encode("utf-8")
    if len(data) <= max_bytes:
        return text
    cut = max_bytes
    while cut > 0 and (data[cut] & 0xC0) == 0x80:
        cut -= 1
    for start, end in tokenize(text).source_spans:
        if start >= cut:
            break
        if start < cut < end:
            cut = start
            break
    return data[:cut].decode("utf-8").rstrip()


def build_index(
    store: DocumentStore, k1: float = DEFAULT_K1, b: float = DEFAULT_B
) -> InvertedIndex:
    """Index title + " " + text of every document. Deterministic: the same
    store yields identical statistics."""
    if len(store) == 0:
        raise RetrievalError("cannot index an empty store")
    if k1 <= 0:
        raise RetrievalError(f"k1 must be positive, got {k1}")
    if not 0.0 <= b <= 1.0:
        raise RetrievalError(f"b must lie in [0, 1], got {b}")

    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    titles: dict[str, str] = {}
    snippets: dict[str, str] = {}
    for doc in store:
        tokens = tokenize(doc.title + " " + doc.text).tokens
        doc_lengths[doc.doc_id] = len(tokens)
        titles[doc.doc_id] = doc.title
        snippets[doc.doc_id] = make_snippet(doc.text)
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((doc.doc_id, tf))
    return InvertedIndex(
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths.values()) / len(doc_lengths),
        doc_count=len(doc_lengths),
        k1=k1,
        b=b,
        titles=titles,
        snippets=snippets,
    )


def bm25_search(
    index: InvertedIndex, query: str, top_k: int = DEFAULT_TOP_K
) -> list[SearchHit]:
    """Top-k hits by BM25 score, ties broken by ascending doc_id.

    Repeated query terms count once. A query that tokenizes to nothing
    returns no hits (with a warning); only documents sharing at least one
    term are scored.
    """
    if top_k < 1:
        raise RetrievalError(f"top_k must be >= 1, got {top_k}")
    seen: dict[str, None] = {}
    for token in tokenize(query).tokens:
        seen.setdefault(token)
    if not seen:
        logger.warning("query %r tokenizes to nothing; returning no hits", query)
        return []

    scores: dict[str, float] = {}
    for term in seen:
        plist = index.postings.get(term)
        if not plist:
            continue
        df = len(plist)
        idf = math.log((index.doc_count - df + 0.5) / (df + 0.5) + 1.0)
        for doc_id, tf in plist:
            norm = 1.0 - index.b + index.b * (
                index.doc_lengths[doc_id] / index.avg_doc_length
            )
            gain = idf * tf * (index.k1 + 1.0) / (tf + index.k1 * norm)
            scores[doc_id] = scores.get(doc_id, 0.0) + gain
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
    return [
        SearchHit(doc_id=doc_id, score=score, snippet=index.snippets[doc_id])
        for doc_id, score in ranked
    ]


def hits_to_json(hits: list[SearchHit]) -> str:
    """Canonical wire form of a hit list; scores fixed to 6 decimal places.

    The HTTP service and in-process callers both serialize through here,
    which is what makes their outputs byte-comparable.
    """
    rows = ",".join(
        "{"
        + f'"doc_id":{json.dumps(h.doc_id, ensure_ascii=False)}'
        + f',"score":{h.score:.6f}'
        + f',"snippet":{json.dumps(h.snippet, ensure_ascii=False)}'
        + "}"
        for h in hits
    )
    return '{"hits":[' + rows + "]}"


def save_index(index: InvertedIndex, path: str | Path) -> None:
    payload = {
        "postings": {t: [[d, tf] for d, tf in pl] for t, pl in index.postings.items()},
        "doc_lengths": index.doc_lengths,
        "avg_doc_length": index.avg_doc_length,
        "doc_count": index.doc_count,
        "k1": index.k1,
        "b": index.b,
        "titles": index.titles,
        "snippets": index.snippets,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False)


def load_index(path: str | Path) -> InvertedIndex:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        index = InvertedIndex(
            postings={
                t: [(d, tf) for d, tf in pl] for t, pl in payload["postings"].items()
            },
            doc_lengths=payload["doc_lengths"],
            avg_doc_length=payload["avg_doc_length"],
            doc_count=payload["doc_count"],
            k1=payload["k1"],
            b=payload["b"],
            titles=payload["titles"],
            snippets=payload["snippets"],
        )
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise RetrievalError(f"cannot load index from {path}: {exc}") from exc
    index.check()
    return index


class SearchTool:
    """The search interface handed to synthesis and evaluation loops."""

    def __init__(self, index: InvertedIndex, top_k: int = DEFAULT_TOP_K):
        self.index = index
        self.top_k = top_k

    def search(self, query: str, top_k: int | None = None) -> list[SearchHit]:
        return bm25_search(self.index, query, top_k or self.top_k)

    def title(self, doc_id: str) -> str:
        return self.index.titles[doc_id]
