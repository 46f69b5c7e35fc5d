"""Curriculum ordering and SFT emission.

Difficulty is the mask count k alone. The curriculum strategy stable-sorts
samples into stages k=1..4; the mixed baseline is a seeded shuffle. Both
orderings emit the same multiset of SFT records, which carry byte-range
loss masks excluding every <information> segment of the completion.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .masking import MaskedSample, render_ramp_prompt
from .trajectory import (
    Trajectory,
    parse_trajectory,
    retrieved_spans,
    serialize_trajectory,
)

MIN_K = 1
MAX_K = 4
DEFAULT_STAGE_MIX = {"ramp_per_k": 100, "downstream": 60}


class CurriculumError(ValueError):
    pass


@dataclass(frozen=True)
class CurriculumPlan:
    ordered_ids: tuple[str, ...]
    stage_boundaries: dict[int, tuple[int, int]]
    strategy: str
    seed: int


@dataclass(frozen=True)
class SFTRecord:
    sample_id: str
    prompt: str
    completion: str
    loss_excluded_ranges: tuple[tuple[int, int], ...]
    k: int


def _check_ks(samples: Sequence[MaskedSample]) -> None:
    for sample in samples:
        if not MIN_K <= sample.k <= MAX_K:
            raise CurriculumError(
                f"{sample.sample_id}: k={sample.k} outside [{MIN_K}, {MAX_K}]"
            )


def curriculum_order(samples: Sequence[MaskedSample]) -> CurriculumPlan:
    """Stable sort by k ascending; original order preserved within a stage."""
    _check_ks(samples)
    order = sorted(range(len(samples)), key=lambda i: samples[i].k)
    boundaries: dict[int, tuple[int, int]] = {}
    for pos, i in enumerate(order):
        k = samples[i].k
        start, _ = boundaries.get(k, (pos, pos))
        boundaries[k] = (start, pos + 1)
    return CurriculumPlan(
        ordered_ids=tuple(samples[i].sample_id for i in order),
        stage_boundaries=boundaries,
        strategy="curriculum",
        seed=0,
    )


def mixed_order(samples: Sequence[MaskedSample], seed: int) -> CurriculumPlan:
    """Seeded uniform shuffle of the sample ids."""
    ids = [sample.sample_id for sample in samples]
    random.Random(seed).shuffle(ids)
    return CurriculumPlan(
        ordered_ids=tuple(ids), stage_boundaries={}, strategy="mixed", seed=seed
    )


def subsample_per_k(
    samples: Sequence[MaskedSample], per_k: int, seed: int
) -> list[MaskedSample]:
    """At most per_k samples for each k, chosen uniformly, input order kept."""
    _check_ks(samples)
    rng = random.Random(seed)
    chosen: set[str] = set()
    for k in range(MIN_K, MAX_K + 1):
        stage = [s for s in samples if s.k == k]
        take = stage if len(stage) <= per_k else rng.sample(stage, per_k)
        chosen.update(s.sample_id for s in take)
    return [s for s in samples if s.sample_id in chosen]


def split_validation(
    samples: Sequence[MaskedSample], per_k: int, seed: int
) -> tuple[list[MaskedSample], list[MaskedSample]]:
    """Hold out up to per_k samples per k for validation; returns
    (train, validation), both in input order."""
    _check_ks(samples)
    rng = random.Random(seed)
    held: set[str] = set()
    for k in range(MIN_K, MAX_K + 1):
        stage = [s for s in samples if s.k == k]
        take = stage if len(stage) <= per_k else rng.sample(stage, per_k)
        held.update(s.sample_id for s in take)
    train = [s for s in samples if s.sample_id not in held]
    validation = [s for s in samples if s.sample_id in held]
    return train, validation


def record_to_dict(record: SFTRecord) -> dict:
    return {
        "sample_id": record.sample_id,
        "prompt": record.prompt,
        "completion": record.completion,
        "loss_excluded_ranges": [list(r) for r in record.loss_excluded_ranges],
        "k": record.k,
    }


def build_sft_record(sample: MaskedSample, trajectory: Trajectory) -> SFTRecord:
    completion = serialize_trajectory(trajectory)
    reparsed = parse_trajectory(completion, trajectory.sample_id)
    if reparsed != trajectory:
        raise CurriculumError(
            f"{sample.sample_id}: completion does not round-trip"
        )
    return SFTRecord(
        sample_id=sample.sample_id,
        prompt=render_ramp_prompt(sample),
        completion=completion,
        loss_excluded_ranges=retrieved_spans(trajectory).excluded_ranges,
        k=sample.k,
    )


def emit_sft_records(
    plan: CurriculumPlan,
    samples: Mapping[str, MaskedSample],
    trajectories: Mapping[str, Trajectory],
    path: str | Path,
) -> list[SFTRecord]:
    """One SFT record per plan id, in plan order; the file is deterministic
    given its inputs. Every id must have both a sample and a trajectory."""
    records: list[SFTRecord] = []
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id in plan.ordered_ids:
            if sample_id not in samples:
                raise CurriculumError(f"no masked sample for id {sample_id}")
            if sample_id not in trajectories:
                raise CurriculumError(f"no trajectory for id {sample_id}")
            record = build_sft_record(samples[sample_id], trajectories[sample_id])
            records.append(record)
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")
    return records


def append_downstream(path: str | Path, downstream_path: str | Path, count: int) -> int:
    """Append up to ``count`` prebuilt SFT records (e.g. downstream QA data)
    after the RAMP stages; returns how many were appended."""
    appended = 0
    with open(downstream_path, encoding="utf-8") as src, open(
        path, "a", encoding="utf-8"
    ) as dst:
        for lineno, line in enumerate(src, start=1):
            if appended >= count:
                break
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CurriculumError(
                    f"{downstream_path}:{lineno}: invalid JSON: {exc}"
                ) from exc
            missing = {"sample_id", "prompt", "completion", "loss_excluded_ranges", "k"} - set(obj)
            if missing:
                raise CurriculumError(
                    f"{downstream_path}:{lineno}: missing fields {sorted(missing)}"
                )
            dst.write(json.dumps(obj, ensure_ascii=False) + "\n")
            appended += 1
    return appended


def write_plan(plan: CurriculumPlan, path: str | Path) -> None:
    payload = {
        "strategy": plan.strategy,
        "seed": plan.seed,
        "ordered_ids": list(plan.ordered_ids),
        "stage_boundaries": {
            str(k): list(v) for k, v in plan.stage_boundaries.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=1)


def read_plan(path: str | Path) -> CurriculumPlan:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return CurriculumPlan(
            ordered_ids=tuple(payload["ordered_ids"]),
            stage_boundaries={
                int(k): (v[0], v[1])
                for k, v in payload["stage_boundaries"].items()
            },
            strategy=payload["strategy"],
            seed=payload["seed"],
        )
    except (OSError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise CurriculumError(f"cannot load plan from {path}: {exc}") from exc
