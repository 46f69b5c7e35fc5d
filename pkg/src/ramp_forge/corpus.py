"""Corpus ingestion and the canonical tokenizer.

Every component that counts, matches, or indexes tokens (BM25, token recall,
the length penalty, span extraction) goes through :func:`tokenize` so their
notions of "token" can never drift apart.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

# Maximal runs of Unicode letters/digits. \w minus the underscore.
_WORD_RE = re.compile(r"[^\W_]+")


class CorpusError(ValueError):
    """Unreadable file, malformed record, or duplicate doc_id."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str


@dataclass(frozen=True)
class TokenSeq:
    """Lowercased tokens plus the byte range each was taken from.

    ``source_spans[i]`` is a half-open (start, end) offset pair into the
    UTF-8 encoding of the original text; decoding that slice and lowercasing
    it yields ``tokens[i]``.
    """

    tokens: tuple[str, ...]
    source_spans: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[str]:
        return iter(self.tokens)


def tokenize(text: str) -> TokenSeq:
    """Split ``text`` into maximal letter/digit runs, lowercased.

    Punctuation and whitespace never appear in tokens, so "3518.17 meters"
    yields ["3518", "17", "meters"]. Deterministic: equal inputs produce
    equal outputs.
    """
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    char_pos = 0
    byte_pos = 0
    for match in _WORD_RE.finditer(text):
        byte_pos += len(text[char_pos : match.start()].encode("utf-8"))
        width = len(match.group().encode("utf-8"))
        tokens.append(match.group().lower())
        spans.append((byte_pos, byte_pos + width))
        byte_pos += width
        char_pos = match.end()
    return TokenSeq(tuple(tokens), tuple(spans))


class DocumentStore:
    """Documents keyed by doc_id, preserving ingestion order."""

    def __init__(self, documents: Iterable[Document] = ()):
        self._docs: dict[str, Document] = {}
        for doc in documents:
            if doc.doc_id in self._docs:
                raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
            self._docs[doc.doc_id] = doc

    @property
    def count(self) -> int:
        return len(self._docs)

    def __len__(self) -> int:
        return len(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs.values())

    def ids(self) -> list[str]:
        return list(self._docs)

    def get(self, doc_id: str) -> Document:
        try:
            return self._docs[doc_id]
        except KeyError:
            raise KeyError(f"unknown doc_id {doc_id!r}") from None


def _require_str(obj: dict, key: str, where: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise CorpusError(f"{where}: field {key!r} missing or not a string")
    return value


def ingest_corpus(path: str | Path) -> DocumentStore:
    """Load a JSONL corpus of {"id", "title", "text"} records.

    Strict: malformed lines, missing/non-string fields, empty id or text,
    and duplicate ids all raise :class:`CorpusError` naming the 1-based
    line number. Blank lines are skipped.
    """
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc

    docs: dict[str, Document] = {}
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{where}: record is not an object")
            doc_id = _require_str(obj, "id", where)
            title = _require_str(obj, "title", where)
            text = _require_str(obj, "text", where)
            if not doc_id:
                raise CorpusError(f"{where}: empty id")
            if not text.strip():
                raise CorpusError(f"{where}: empty text")
            if doc_id in docs:
                raise CorpusError(f"{where}: duplicate doc_id {doc_id!r}")
            docs[doc_id] = Document(doc_id=doc_id, title=title, text=text)
    return DocumentStore(docs.values())


def write_corpus(store: DocumentStore, path: str | Path) -> int:
    """Write the store back out as JSONL; returns the record count."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for doc in store:
            fh.write(
                json.dumps(
                    {"id": doc.doc_id, "title": doc.title, "text": doc.text},
                    ensure_ascii=False,
                )
                + "\n"
            )
    return store.count
