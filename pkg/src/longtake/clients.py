"""Inference-service clients behind small protocols.

Two wire adapters exist per protocol: an HTTP one speaking a JSON
chat-completion format (images attached as base64 PNG, temperature 0) and
a mock one resolving a digest of the request against a fixture file, which
keeps every pipeline test deterministic and offline.
"""

from __future__ import annotations

import base64
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import httpx

from .errors import ProtocolError, TransportError

DEFAULT_RETRIES = 3
DEFAULT_BACKOFF_S = 0.5


def request_digest(images: Sequence[bytes], prompt: str) -> str:
    """Stable identity of one inference request (prompt + image bytes)."""
    hasher = hashlib.sha256()
    hasher.update(prompt.encode("utf-8"))
    for img in images:
        hasher.update(b"\x00")
        hasher.update(hashlib.sha256(img).digest())
    return hasher.hexdigest()


class MultimodalClient(Protocol):
    name: str

    def complete(self, images: Sequence[bytes], prompt: str) -> str: ...


class TextClassifier(Protocol):
    name: str

    def rank(self, text: str, labels: Sequence[str]) -> list[str]: ...


def call_with_retries(
    fn: Callable[[], str],
    retries: int = DEFAULT_RETRIES,
    backoff_s: float = DEFAULT_BACKOFF_S,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Retry transport failures with exponential backoff, then re-raise.

    Anything that is not a TransportError fails immediately: a malformed
    answer will not get better by asking again.
    """
    attempt = 0
    while True:
        try:
            return fn()
        except TransportError:
            if attempt >= retries:
                raise
            sleep(backoff_s * (2**attempt))
            attempt += 1


class HttpChatClient:
    """JSON-over-HTTP chat-completion adapter."""

    def __init__(self, endpoint: str, model: str, timeout_s: float = 120.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.timeout_s = timeout_s
        self.name = f"http:{self.endpoint}"

    def complete(self, images: Sequence[bytes], prompt: str) -> str:
        content: list[dict] = [{"type": "text", "text": prompt}]
        for img in images:
            b64 = base64.b64encode(img).decode("ascii")
            content.append(
                {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}
            )
        payload = {
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        }
        try:
            resp = httpx.post(
                f"{self.endpoint}/v1/chat/completions", json=payload, timeout=self.timeout_s
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"{self.name}: {exc}") from exc
        if resp.status_code >= 500:
            raise TransportError(f"{self.name}: HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise ProtocolError(f"{self.name}: HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"{self.name}: malformed completion payload: {exc}") from exc


class FixtureChatClient:
    """Mock adapter: request digest -> canned response from a JSON file.

    The optional "default" key answers any request without its own entry;
    without it, unknown requests raise, keeping tests fail-closed.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.name = f"mock:{self.path}"
        with open(self.path, "r", encoding="utf-8") as fh:
            self._responses: dict[str, str] = json.load(fh)
        self.calls = 0

    def complete(self, images: Sequence[bytes], prompt: str) -> str:
        self.calls += 1
        digest = request_digest(images, prompt)
        if digest in self._responses:
            return self._responses[digest]
        if "default" in self._responses:
            return self._responses["default"]
        raise ProtocolError(f"{self.name}: no fixture entry for digest {digest[:12]}…")


class HttpZeroShotClassifier:
    """Zero-shot label ranking over HTTP (inputs + candidate_labels in,
    ranked labels out)."""

    def __init__(self, endpoint: str, timeout_s: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout_s = timeout_s
        self.name = f"http:{self.endpoint}"

    def rank(self, text: str, labels: Sequence[str]) -> list[str]:
        payload = {"inputs": text, "parameters": {"candidate_labels": list(labels)}}
        try:
            resp = httpx.post(self.endpoint, json=payload, timeout=self.timeout_s)
        except httpx.HTTPError as exc:
            raise TransportError(f"{self.name}: {exc}") from exc
        if resp.status_code >= 500:
            raise TransportError(f"{self.name}: HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise ProtocolError(f"{self.name}: HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            ranked = resp.json()["labels"]
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"{self.name}: malformed classifier payload: {exc}") from exc
        if not isinstance(ranked, list) or not ranked:
            raise ProtocolError(f"{self.name}: classifier returned no labels")
        return ranked


class FixtureClassifier:
    """Mock classifier: exact caption text -> label, with optional default."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.name = f"mock:{self.path}"
        with open(self.path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        self._map: dict[str, str] = data.get("map", {})
        self._default: Optional[str] = data.get("default")
        self.calls = 0

    def rank(self, text: str, labels: Sequence[str]) -> list[str]:
        self.calls += 1
        top = self._map.get(text, self._default)
        if top is None:
            raise ProtocolError(f"{self.name}: no fixture entry for text {text[:40]!r}")
        return [top] + [lab for lab in labels if lab != top]


@dataclass
class ClientBundle:
    """Every external inference dependency of one pipeline run."""

    mllm: Optional[MultimodalClient] = None
    vlm: Optional[MultimodalClient] = None
    llm: Optional[MultimodalClient] = None
    classifier: Optional[TextClassifier] = None


def _chat_client(endpoint: str, model: str) -> Optional[MultimodalClient]:
    if not endpoint:
        return None
    if endpoint.startswith("mock:"):
        return FixtureChatClient(endpoint[5:])
    return HttpChatClient(endpoint, model)


def _classifier_client(endpoint: str) -> Optional[TextClassifier]:
    if not endpoint:
        return None
    if endpoint.startswith("mock:"):
        return FixtureClassifier(endpoint[5:])
    return HttpZeroShotClassifier(endpoint)


def bundle_from_config(cfg) -> ClientBundle:
    return ClientBundle(
        mllm=_chat_client(cfg.mllm_endpoint, cfg.mllm_model),
        vlm=_chat_client(cfg.vlm_endpoint, cfg.vlm_model),
        llm=_chat_client(cfg.llm_endpoint, cfg.llm_model),
        classifier=_classifier_client(cfg.classifier_endpoint),
    )
