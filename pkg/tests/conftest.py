import json
from pathlib import Path

import pytest

from ramp_forge.corpus import Document, DocumentStore
from ramp_forge.masking import extract_salient_spans, reconstruct_paragraph, select_masks_random
from ramp_forge.retrieval import SearchTool, build_index

FIXTURES = Path(__file__).parent / "fixtures"

CASE_STUDY_TEXT = (
    "David Hoelscher David Henry Hoelscher (born November 27, 1975) is a former "
    "American football defensive tackle. He played one game in the National "
    "Football League for the Washington Redskins in 1998. He played college "
    "football at Eastern Kentucky University."
)


@pytest.fixture
def case_study_doc():
    return Document("hoelscher", "David Hoelscher", CASE_STUDY_TEXT)


@pytest.fixture
def case_study_response():
    return (FIXTURES / "case_study_response.txt").read_text(encoding="utf-8")


@pytest.fixture
def tiny_store(case_study_doc):
    return DocumentStore(
        [
            case_study_doc,
            Document(
                "ekup",
                "Eastern Kentucky football",
                "Eastern Kentucky University fields a football program whose "
                "players have reached the National Football League.",
            ),
            Document(
                "paris",
                "Paris",
                "Paris is the capital city of France, set on the Seine river.",
            ),
            Document(
                "bridge",
                "Jinshan Railway Bridge",
                "The Jinshan Railway Huangpujiang Special Bridge measures "
                "3518.17 meters in total length.",
            ),
        ]
    )


@pytest.fixture
def tiny_tool(tiny_store):
    return SearchTool(build_index(tiny_store))


@pytest.fixture
def case_study_sample(case_study_doc):
    spans = extract_salient_spans(case_study_doc)
    return select_masks_random(case_study_doc, spans, 3, seed=11)


def write_jsonl(path: Path, rows) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


class RoleScriptClient:
    """Routes each request to a handler chosen by a marker in the prompt."""

    def __init__(self, handlers):
        self.handlers = handlers  # list of (marker, callable prompt -> str)
        self.calls = 0

    def complete(self, messages):
        self.calls += 1
        content = messages[-1]["content"]
        for marker, handler in self.handlers:
            if marker in content:
                return handler(content)
        raise AssertionError(f"no handler matched: {content[:80]!r}")


class TurnScriptClient:
    """Replays a fixed sequence of outputs, one per call."""

    def __init__(self, turns):
        self.turns = list(turns)
        self.calls = 0

    def complete(self, messages):
        if self.calls >= len(self.turns):
            raise AssertionError("script exhausted")
        out = self.turns[self.calls]
        self.calls += 1
        return out


class ComparisonJudge:
    """Scripted judge: A iff the prompt's final standard answer equals its
    predicted answer (both values must be single-line)."""

    def complete(self, messages):
        content = messages[-1]["content"]
        tail = content.rsplit("Standard Answer: ", 1)[1]
        target, rest = tail.split("\nPredicted Answer: ", 1)
        prediction = rest.split("\n", 1)[0]
        return "A" if target == prediction else "B"


class ConstantClient:
    def __init__(self, output):
        self.output = output

    def complete(self, messages):
        return self.output
