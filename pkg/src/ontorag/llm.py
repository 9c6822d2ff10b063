"""Language-model clients: an HTTP chat-completion client and offline stubs."""

from __future__ import annotations

import logging
import time
from typing import Any, Protocol, runtime_checkable

import httpx

log = logging.getLogger("ontorag.llm")

RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class LLMError(RuntimeError):
    """A remote model or embedding service could not produce a result."""


@runtime_checkable
class LanguageModelClient(Protocol):
    model: str

    def complete(self, prompt: str) -> str: ...


def post_json(
    client: httpx.Client,
    url: str,
    payload: dict[str, Any],
    headers: dict[str, str],
    max_attempts: int = 3,
    backoff: float = 1.0,
    sleep=time.sleep,
) -> dict[str, Any]:
    """POST ``payload`` and return the decoded JSON body.

    Transport failures and retryable status codes are retried with
    exponential backoff (``backoff``, ``2*backoff``, ...).
    """
    last: Exception | None = None
    for attempt in range(max_attempts):
        if attempt:
            sleep(backoff * 2 ** (attempt - 1))
        try:
            resp = client.post(url, json=payload, headers=headers)
        except httpx.TransportError as exc:
            last = exc
            log.warning("request to %s failed: %s", url, exc, extra={"event": "http_retry", "attempt": attempt + 1})
            continue
        if resp.status_code in RETRYABLE_STATUS:
            last = LLMError(f"{url} returned HTTP {resp.status_code}")
            log.warning("%s", last, extra={"event": "http_retry", "attempt": attempt + 1})
            continue
        if resp.status_code >= 400:
            raise LLMError(f"{url} returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise LLMError(f"{url} returned a non-JSON body") from exc
    raise LLMError(f"{url} failed after {max_attempts} attempts: {last}")


class RemoteChatClient:
    """OpenAI-compatible ``/chat/completions`` client.

    Deterministic decoding: temperature 0 and a 4096-token completion cap by
    default.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        temperature: float = 0.0,
        max_tokens: int = 4096,
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._http = httpx.Client(timeout=timeout, transport=transport)

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        body = post_json(self._http, self.url, payload, self._headers, self.max_attempts, self.backoff)
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise LLMError("chat completion response has no choices[0].message.content") from None
        if not isinstance(text, str) or not text.strip():
            raise LLMError("empty completion")
        return text

    def close(self) -> None:
        self._http.close()


class EchoAnswerClient:
    """Offline answer model that repeats the fact lines found in the prompt."""

    model = "echo-stub"

    def complete(self, prompt: str) -> str:
        lines = [ln for ln in prompt.splitlines() if ln.startswith("{")]
        for marker in ("Context: {", "Data: {"):
            for ln in prompt.splitlines():
                if ln.startswith(marker):
                    lines.insert(0, ln[len(marker) - 1:])
        return "\n".join(lines) if lines else "No facts available."
