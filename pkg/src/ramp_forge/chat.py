"""Chat-completion clients.

Everything that talks to a model goes through the ChatClient protocol:
a list of {"role", "content"} messages in, completion text out. The HTTP
client speaks the common chat-completions wire shape; the scripted client
replays canned outputs keyed by a hash of the exact message list, which is
what makes synthesis and evaluation runs reproducible offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import requests

logger = logging.getLogger(__name__)

Message = dict[str, str]


class ChatClientError(RuntimeError):
    pass


class ChatClient(Protocol):
    def complete(self, messages: Sequence[Message]) -> str: ...


def message_hash(messages: Sequence[Message]) -> str:
    """Stable key for a message list; used to address scripted replies."""
    canonical = json.dumps(
        list(messages), sort_keys=True, ensure_ascii=False, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _extract_completion(payload: object) -> str:
    if isinstance(payload, dict):
        choices = payload.get("choices")
        if isinstance(choices, list) and choices:
            first = choices[0]
            if isinstance(first, dict):
                message = first.get("message")
                if isinstance(message, dict) and isinstance(
                    message.get("content"), str
                ):
                    return message["content"]
                if isinstance(first.get("text"), str):
                    return first["text"]
        for key in ("content", "text"):
            if isinstance(payload.get(key), str):
                return payload[key]
    raise ChatClientError("response carries no completion text")


@dataclass
class HttpChatClient:
    """POSTs {"model", "messages", "temperature"} and reads back the first
    choice. Retries transient failures with a short backoff."""

    base_url: str
    model: str
    path: str = "/v1/chat/completions"
    timeout: float = 60.0
    max_retries: int = 3
    temperature: float = 0.0

    def complete(self, messages: Sequence[Message]) -> str:
        url = self.base_url.rstrip("/") + self.path
        payload = {
            "model": self.model,
            "messages": list(messages),
            "temperature": self.temperature,
        }
        attempts = self.max_retries + 1
        last: Exception | None = None
        for attempt in range(attempts):
            try:
                response = requests.post(url, json=payload, timeout=self.timeout)
                response.raise_for_status()
                return _extract_completion(response.json())
            except (requests.RequestException, ValueError, ChatClientError) as exc:
                last = exc
                logger.warning(
                    "chat request %d/%d failed: %s", attempt + 1, attempts, exc
                )
                if attempt + 1 < attempts:
                    time.sleep(min(0.1 * 2**attempt, 2.0))
        raise ChatClientError(
            f"chat endpoint {url} failed after {attempts} attempts: {last}"
        )


@dataclass
class ScriptedChatClient:
    """Replays canned outputs keyed by message_hash of the request."""

    replay: dict[str, str]

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedChatClient":
        try:
            with open(path, encoding="utf-8") as fh:
                replay = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ChatClientError(f"cannot load replay file {path}: {exc}") from exc
        if not isinstance(replay, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in replay.items()
        ):
            raise ChatClientError(f"replay file {path} must map hashes to strings")
        return cls(replay)

    def complete(self, messages: Sequence[Message]) -> str:
        key = message_hash(messages)
        try:
            return self.replay[key]
        except KeyError:
            raise ChatClientError(
                f"no scripted output for message hash {key}"
            ) from None


@dataclass
class RecordingChatClient:
    """Wraps another client and captures its replies as a replay script."""

    inner: ChatClient
    replay: dict[str, str] = field(default_factory=dict)

    def complete(self, messages: Sequence[Message]) -> str:
        output = self.inner.complete(messages)
        self.replay[message_hash(messages)] = output
        return output

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.replay, fh, ensure_ascii=False, indent=1, sort_keys=True)
