"""Tagged reasoning-trace grammar.

A trajectory is a sequence of <think>, <search>, <information>, and <answer>
blocks. Canonical serialization joins the tagged blocks with single
newlines; parsing accepts any whitespace between blocks and nothing else.
Byte ranges on segments always refer to the canonical serialization, so
parse(serialize(t)) == t holds exactly and loss masks computed from a
trajectory line up with its serialized bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

THINK = "think"
SEARCH = "search"
INFORMATION = "information"
ANSWER = "answer"
SEGMENT_KINDS = (THINK, SEARCH, INFORMATION, ANSWER)

TAG_LITERALS = tuple(
    f"<{kind}>" for kind in SEGMENT_KINDS
) + tuple(f"</{kind}>" for kind in SEGMENT_KINDS)

_TAG_BYTES = [literal.encode("utf-8") for literal in TAG_LITERALS]

# System template for the search-interleaved answer protocol. Rendered as
# template + " " + question.
RL_TEMPLATE = (
    "Answer the given question. You must conduct reasoning inside <think> and "
    "</think> first every time you get new information. After reasoning, if you "
    "find you lack some knowledge, you can call a search engine by <search> "
    "query </search>, and it will return the top searched results between "
    "<information> and </information>. You can search as many times as you "
    "want. If you find no further external knowledge needed, you can directly "
    "provide the answer inside <answer> and </answer> without detailed "
    "illustrations. For example, <answer> xxx </answer>. Question:"
)


class TrajectoryError(ValueError):
    """Malformed trajectory text or violated structural invariant.

    ``byte_offset`` locates the problem in the UTF-8 bytes of the parsed
    input when the error came from parsing; None for construction errors.
    """

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


@dataclass(frozen=True)
class TaggedSegment:
    kind: str
    text: str
    byte_range: tuple[int, int]


@dataclass(frozen=True)
class LossMask:
    excluded_ranges: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class Trajectory:
    sample_id: str
    segments: tuple[TaggedSegment, ...]
    search_count: int
    final_answer: str | None

    @classmethod
    def from_segments(
        cls, sample_id: str, pairs: Sequence[tuple[str, str]]
    ) -> "Trajectory":
        """Build a trajectory from (kind, text) pairs, validating structure
        and computing canonical byte ranges."""
        _check_structure(pairs)
        segments = []
        offset = 0
        for kind, text in pairs:
            open_len = len(kind) + 2
            width = len(text.encode("utf-8"))
            segments.append(
                TaggedSegment(kind, text, (offset + open_len, offset + open_len + width))
            )
            # open tag + text + close tag + joining newline
            offset += open_len + width + open_len + 1 + 1
        final = pairs[-1][1] if pairs and pairs[-1][0] == ANSWER else None
        return cls(
            sample_id=sample_id,
            segments=tuple(segments),
            search_count=sum(1 for kind, _ in pairs if kind == SEARCH),
            final_answer=final,
        )

    def pairs(self) -> list[tuple[str, str]]:
        return [(seg.kind, seg.text) for seg in self.segments]


def _check_structure(pairs: Sequence[tuple[str, str]]) -> None:
    if not pairs:
        raise TrajectoryError("trajectory has no segments")
    for i, (kind, text) in enumerate(pairs):
        if kind not in SEGMENT_KINDS:
            raise TrajectoryError(f"segment {i}: unknown kind {kind!r}")
        for literal in TAG_LITERALS:
            if literal in text:
                raise TrajectoryError(f"segment {i}: text contains {literal}")
        if kind == INFORMATION and (i == 0 or pairs[i - 1][0] != SEARCH):
            raise TrajectoryError(
                f"segment {i}: <information> not immediately preceded by <search>"
            )
        if kind == ANSWER and i != len(pairs) - 1:
            raise TrajectoryError(f"segment {i}: <answer> is not the final segment")


def render_segments(pairs: Iterable[tuple[str, str]]) -> str:
    """Canonical text: tagged blocks joined by single newlines."""
    return "\n".join(f"<{kind}>{text}</{kind}>" for kind, text in pairs)


def serialize_trajectory(trajectory: Trajectory) -> str:
    """Render a trajectory canonically, re-validating its invariants."""
    pairs = trajectory.pairs()
    rebuilt = Trajectory.from_segments(trajectory.sample_id, pairs)
    if rebuilt != trajectory:
        raise TrajectoryError(
            "trajectory fields are inconsistent with its segments"
        )
    return render_segments(pairs)


def _find_next_tag(data: bytes, pos: int) -> tuple[bytes | None, int]:
    best: bytes | None = None
    best_at = len(data)
    for tag in _TAG_BYTES:
        at = data.find(tag, pos)
        if at != -1 and at < best_at:
            best, best_at = tag, at
    return best, best_at


def _first_non_ws(data: bytes, start: int, end: int) -> int | None:
    gap = data[start:end]
    if not gap.decode("utf-8", errors="replace").strip():
        return None
    stripped = len(gap) - len(gap.lstrip())
    return start + stripped


def parse_trajectory(text: str, sample_id: str = "") -> Trajectory:
    """Parse tagged trajectory text, rejecting anything outside the grammar.

    Errors name a byte offset into the UTF-8 encoding of ``text``: unclosed
    or nested tags, stray text between blocks, <information> without a
    preceding <search>, and any segment after <answer>.
    """
    try:
        data = text.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise TrajectoryError(f"input is not valid UTF-8: {exc}") from None

    pairs: list[tuple[str, str]] = []
    offsets: list[int] = []
    pos = 0
    while pos < len(data):
        tag, tag_at = _find_next_tag(data, pos)
        stray = _first_non_ws(data, pos, tag_at if tag else len(data))
        if stray is not None:
            raise TrajectoryError("text outside tags", byte_offset=stray)
        if tag is None:
            break
        if tag.startswith(b"</"):
            raise TrajectoryError(
                f"unmatched closing tag {tag.decode()}", byte_offset=tag_at
            )
        kind = tag[1:-1].decode()
        body_start = tag_at + len(tag)
        closer, closer_at = _find_next_tag(data, body_start)
        if closer is None:
            raise TrajectoryError(f"unclosed <{kind}>", byte_offset=tag_at)
        if closer != b"</" + tag[1:]:
            raise TrajectoryError(
                f"expected </{kind}> but found {closer.decode()}",
                byte_offset=closer_at,
            )
        pairs.append((kind, data[body_start:closer_at].decode("utf-8")))
        offsets.append(tag_at)
        pos = closer_at + len(closer)

    if not pairs:
        raise TrajectoryError("trajectory has no segments", byte_offset=0)
    saw_answer_at: int | None = None
    for i, (kind, _) in enumerate(pairs):
        if saw_answer_at is not None:
            raise TrajectoryError(
                "segment after <answer>", byte_offset=offsets[i]
            )
        if kind == INFORMATION and (i == 0 or pairs[i - 1][0] != SEARCH):
            raise TrajectoryError(
                "<information> not immediately preceded by <search>",
                byte_offset=offsets[i],
            )
        if kind == ANSWER:
            saw_answer_at = offsets[i]
    return Trajectory.from_segments(sample_id, pairs)


def retrieved_spans(trajectory: Trajectory) -> LossMask:
    """Byte ranges of <information> content in the canonical serialization."""
    return LossMask(
        excluded_ranges=tuple(
            seg.byte_range
            for seg in trajectory.segments
            if seg.kind == INFORMATION
        )
    )


def render_rl_template(question: str) -> str:
    if not question.strip():
        raise ValueError("question is empty")
    return RL_TEMPLATE + " " + question


def trajectory_to_dict(trajectory: Trajectory) -> dict:
    return {
        "sample_id": trajectory.sample_id,
        "segments": [
            {"kind": seg.kind, "text": seg.text} for seg in trajectory.segments
        ],
        "final_answer": trajectory.final_answer,
    }


def trajectory_from_dict(obj: dict, where: str = "trajectory") -> Trajectory:
    try:
        pairs = [(seg["kind"], seg["text"]) for seg in obj["segments"]]
        trajectory = Trajectory.from_segments(obj["sample_id"], pairs)
    except (KeyError, TypeError) as exc:
        raise TrajectoryError(f"{where}: malformed record: {exc}") from exc
    if obj.get("final_answer") != trajectory.final_answer:
        raise TrajectoryError(
            f"{where}: final_answer does not match the segments"
        )
    return trajectory


def write_trajectories(
    trajectories: Iterable[Trajectory], path: str | Path
) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for trajectory in trajectories:
            fh.write(
                json.dumps(trajectory_to_dict(trajectory), ensure_ascii=False)
                + "\n"
            )
            count += 1
    return count


def read_trajectories(path: str | Path) -> list[Trajectory]:
    out: list[Trajectory] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TrajectoryError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            out.append(trajectory_from_dict(obj, where=f"{path}:{lineno}"))
    return out
