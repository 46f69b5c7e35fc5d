"""Pipeline configuration.

One JSON file, overridable per run with --set dotted.key=value flags.
Validation errors always name the dotted field path so a bad config is
diagnosable from the CLI error line alone.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, path: str, detail: str):
        super().__init__(f"{path}: {detail}")
        self.path = path


@dataclass
class ClientConfig:
    kind: str = "http"
    base_url: str = ""
    model: str = ""
    path: str = "/v1/chat/completions"
    timeout: float = 60.0
    max_retries: int = 3
    temperature: float = 0.0
    replay_path: str = ""


@dataclass
class IndexConfig:
    k1: float = 1.2
    b: float = 0.75
    top_k: int = 5


@dataclass
class MaskingConfig:
    strategy: str = "random"
    k_distribution: dict[int, int] = field(
        default_factory=lambda: {1: 2, 2: 2, 3: 2, 4: 2}
    )


@dataclass
class SynthesisConfig:
    mode: str = "distill"
    client: ClientConfig = field(default_factory=ClientConfig)
    judge: ClientConfig = field(default_factory=ClientConfig)
    max_steps: int = 8
    thresholds: list[int] = field(default_factory=lambda: [500, 1000, 2000])


@dataclass
class RewardsConfig:
    mode: str = "penalized"
    alpha: float = 0.2
    beta: float = 8.0
    gamma: float = 4.0
    eps_low: float = 0.2
    eps_high: float = 0.28


@dataclass
class CurriculumConfig:
    strategy: str = "curriculum"
    stage_mix: dict[str, int] = field(
        default_factory=lambda: {"ramp_per_k": 100, "downstream": 60}
    )
    validation_per_k: int = 0


@dataclass
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8080


@dataclass
class PipelineConfig:
    corpus: str = ""
    out_dir: str = "out"
    seed: int = 7
    index: IndexConfig = field(default_factory=IndexConfig)
    masking: MaskingConfig = field(default_factory=MaskingConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    rewards: RewardsConfig = field(default_factory=RewardsConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    serve: ServeConfig = field(default_factory=ServeConfig)


def _coerce(cls, obj: dict, path: str):
    """Build a dataclass from a plain dict, rejecting unknown keys and wrong
    types with the dotted path of the offending field."""
    if not isinstance(obj, dict):
        raise ConfigError(path or "config", f"expected an object, got {type(obj).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(obj) - set(known)
    if unknown:
        where = f"{path}.{sorted(unknown)[0]}" if path else sorted(unknown)[0]
        raise ConfigError(where, "unknown config key")
    kwargs = {}
    for name, f in known.items():
        if name not in obj:
            continue
        value = obj[name]
        sub_path = f"{path}.{name}" if path else name
        if dataclasses.is_dataclass(f.type) or f.type in (
            "ClientConfig",
            "IndexConfig",
            "MaskingConfig",
            "SynthesisConfig",
            "RewardsConfig",
            "CurriculumConfig",
            "ServeConfig",
        ):
            cls_map = {
                "ClientConfig": ClientConfig,
                "IndexConfig": IndexConfig,
                "MaskingConfig": MaskingConfig,
                "SynthesisConfig": SynthesisConfig,
                "RewardsConfig": RewardsConfig,
                "CurriculumConfig": CurriculumConfig,
                "ServeConfig": ServeConfig,
            }
            sub_cls = cls_map.get(f.type if isinstance(f.type, str) else f.type.__name__)
            kwargs[name] = _coerce(sub_cls, value, sub_path)
            continue
        kwargs[name] = _check_scalar(f, value, sub_path)
    return cls(**kwargs)


def _check_scalar(f: dataclasses.Field, value, path: str):
    declared = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if declared == "str":
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if declared == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if declared == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if declared == "dict[int, int]":
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected an object, got {value!r}")
        out: dict[int, int] = {}
        for k, v in value.items():
            try:
                key = int(k)
            except (TypeError, ValueError):
                raise ConfigError(f"{path}.{k}", "key must be an integer") from None
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{path}.{k}", f"expected an integer, got {v!r}")
            out[key] = v
        return out
    if declared == "dict[str, int]":
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected an object, got {value!r}")
        for k, v in value.items():
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{path}.{k}", f"expected an integer, got {v!r}")
        return dict(value)
    if declared == "list[int]":
        if not isinstance(value, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(path, f"expected a list of integers, got {value!r}")
        return list(value)
    raise ConfigError(path, f"unhandled config field type {declared!r}")


def load_config_dict(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config", f"{path} must hold a JSON object")
    return obj


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply --set dotted.key=value pairs; values parse as JSON when they
    can, else as bare strings."""
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(key or "--set", f"override must be key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(key, f"cannot descend past non-object {part!r}")
            node = nxt
        node[parts[-1]] = value
    return cfg


def build_config(obj: dict) -> PipelineConfig:
    config = _coerce(PipelineConfig, obj, "")
    validate_config(config)
    return config


def validate_config(config: PipelineConfig) -> None:
    if config.index.k1 <= 0:
        raise ConfigError("index.k1", f"must be > 0, got {config.index.k1}")
    if not 0.0 <= config.index.b <= 1.0:
        raise ConfigError("index.b", f"must lie in [0, 1], got {config.index.b}")
    if config.index.top_k < 1:
        raise ConfigError("index.top_k", f"must be >= 1, got {config.index.top_k}")
    if config.masking.strategy not in ("random", "ppl_greedy"):
        raise ConfigError(
            "masking.strategy",
            f"must be random or ppl_greedy, got {config.masking.strategy!r}",
        )
    dist = config.masking.k_distribution
    if not dist:
        raise ConfigError("masking.k_distribution", "must not be empty")
    for k, count in dist.items():
        if not 1 <= k <= 4:
            raise ConfigError(
                f"masking.k_distribution.{k}", "mask count must lie in [1, 4]"
            )
        if count < 0:
            raise ConfigError(
                f"masking.k_distribution.{k}", f"count must be >= 0, got {count}"
            )
    if sum(dist.values()) < 1:
        raise ConfigError("masking.k_distribution", "must request at least 1 sample")
    if config.synthesis.mode not in ("distill", "multiagent"):
        raise ConfigError(
            "synthesis.mode",
            f"must be distill or multiagent, got {config.synthesis.mode!r}",
        )
    if config.synthesis.max_steps < 1:
        raise ConfigError(
            "synthesis.max_steps", f"must be >= 1, got {config.synthesis.max_steps}"
        )
    thresholds = config.synthesis.thresholds
    if thresholds != sorted(set(thresholds)) or any(t < 1 for t in thresholds):
        raise ConfigError(
            "synthesis.thresholds", "must be strictly increasing positive integers"
        )
    for name, client in (
        ("synthesis.client", config.synthesis.client),
        ("synthesis.judge", config.synthesis.judge),
    ):
        if client.kind not in ("http", "scripted"):
            raise ConfigError(
                f"{name}.kind", f"must be http or scripted, got {client.kind!r}"
            )
        if client.max_retries < 0:
            raise ConfigError(f"{name}.max_retries", "must be >= 0")
        if client.timeout <= 0:
            raise ConfigError(f"{name}.timeout", "must be > 0")
    if config.rewards.mode not in ("recall", "penalized", "judge"):
        raise ConfigError(
            "rewards.mode",
            f"must be recall, penalized, or judge, got {config.rewards.mode!r}",
        )
    if config.rewards.alpha < 0:
        raise ConfigError("rewards.alpha", f"must be >= 0, got {config.rewards.alpha}")
    if config.rewards.beta <= 0:
        raise ConfigError("rewards.beta", f"must be > 0, got {config.rewards.beta}")
    if config.rewards.gamma <= 0:
        raise ConfigError("rewards.gamma", f"must be > 0, got {config.rewards.gamma}")
    if not 0.0 <= config.rewards.eps_low < 1.0:
        raise ConfigError(
            "rewards.eps_low", f"must lie in [0, 1), got {config.rewards.eps_low}"
        )
    if config.rewards.eps_high < 0:
        raise ConfigError(
            "rewards.eps_high", f"must be >= 0, got {config.rewards.eps_high}"
        )
    if config.curriculum.strategy not in ("curriculum", "mixed"):
        raise ConfigError(
            "curriculum.strategy",
            f"must be curriculum or mixed, got {config.curriculum.strategy!r}",
        )
    for key, count in config.curriculum.stage_mix.items():
        if key not in ("ramp_per_k", "downstream"):
            raise ConfigError(f"curriculum.stage_mix.{key}", "unknown source")
        if count < 0:
            raise ConfigError(f"curriculum.stage_mix.{key}", "count must be >= 0")
    if config.curriculum.validation_per_k < 0:
        raise ConfigError("curriculum.validation_per_k", "must be >= 0")
    if not 0 <= config.serve.port <= 65535:
        raise ConfigError("serve.port", f"must lie in [0, 65535], got {config.serve.port}")


def require_corpus(config: PipelineConfig) -> Path:
    if not config.corpus:
        raise ConfigError("corpus", "a corpus path is required for this subcommand")
    path = Path(config.corpus)
    if not path.exists():
        raise ConfigError("corpus", f"path {path} does not exist")
    return path


def config_to_dict(config: PipelineConfig) -> dict:
    return dataclasses.asdict(config)


def config_digest(config: PipelineConfig) -> str:
    canonical = json.dumps(
        config_to_dict(config), sort_keys=True, ensure_ascii=False, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
