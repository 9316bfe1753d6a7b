"""Text-generation provider abstraction.

Agents never talk to a model directly; they call ``complete(messages)``
on a provider. Three implementations ship here:

* :class:`ScriptedProvider` answers from a fixture table keyed by a
  digest of the request, with an optional deterministic fallback, so the
  whole agent chain is testable offline.
* :class:`CallableProvider` wraps a plain function, for oracle-style
  providers in tests and evaluation harnesses.
* :class:`HttpProvider` posts role-tagged messages to a remote endpoint
  and returns its completion text.

:class:`ProviderSlot` holds the live provider behind an atomic swap, so
an updated twin can replace a running agent without disturbing in-flight
requests.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from .errors import ProviderUnavailable

Message = tuple[str, str]


class TextGenProvider(Protocol):
    """Anything that can complete a list of (role, text) messages."""

    provider_id: str

    def complete(self, messages: Sequence[Message]) -> str: ...


def digest_messages(messages: Sequence[Message]) -> str:
    """Stable hex digest of a request, the key for scripted fixtures."""
    canonical = json.dumps([[role, text] for role, text in messages], ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def default_scripted_completion(messages: Sequence[Message]) -> str:
    """Deterministic placeholder completion derived from the request."""
    return f"[scripted:{digest_messages(messages)[:12]}] simulated completion"


class ScriptedProvider:
    """Deterministic provider answering from a digest-keyed fixture table.

    Args:
        fixtures: digest -> completion map (see :func:`digest_messages`).
        fallback: used when no fixture matches; a fixed string or a
            deterministic ``messages -> str`` callable. Without a fallback
            a miss raises :class:`ProviderUnavailable`.
    """

    def __init__(
        self,
        fixtures: dict[str, str] | None = None,
        fallback: str | Callable[[Sequence[Message]], str] | None = None,
        provider_id: str = "scripted",
    ):
        self.fixtures = dict(fixtures or {})
        self.fallback = fallback
        self.provider_id = provider_id

    @classmethod
    def from_file(cls, path: str | Path, provider_id: str = "scripted") -> "ScriptedProvider":
        with open(path, "r", encoding="utf-8") as handle:
            fixtures = json.load(handle)
        return cls(fixtures=fixtures, fallback=default_scripted_completion, provider_id=provider_id)

    def complete(self, messages: Sequence[Message]) -> str:
        key = digest_messages(messages)
        if key in self.fixtures:
            return self.fixtures[key]
        if callable(self.fallback):
            return self.fallback(messages)
        if self.fallback is not None:
            return self.fallback
        raise ProviderUnavailable(f"no scripted fixture for request digest {key[:12]}")


class CallableProvider:
    """Wraps a plain function as a provider."""

    def __init__(self, fn: Callable[[Sequence[Message]], str], provider_id: str = "callable"):
        self._fn = fn
        self.provider_id = provider_id

    def complete(self, messages: Sequence[Message]) -> str:
        return self._fn(messages)


class HttpProvider:
    """Remote provider speaking a small JSON wire format.

    Request: ``{"model": ..., "messages": [{"role": r, "content": t}, ...]}``
    posted to the endpoint; response: ``{"completion": "..."}``. The bearer
    credential is read from the environment variable named by
    ``credential_env`` at request time, never stored in config files.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        credential_env: str = "SAGINGUARD_API_KEY",
        timeout: float = 60.0,
        provider_id: str | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.credential_env = credential_env
        self.timeout = timeout
        self.provider_id = provider_id or f"http:{model}"

    def complete(self, messages: Sequence[Message]) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": role, "content": text} for role, text in messages],
        }
        headers = {"Content-Type": "application/json"}
        credential = os.environ.get(self.credential_env)
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        try:
            response = requests.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout
            )
            response.raise_for_status()
            body = response.json()
        except requests.RequestException as exc:
            raise ProviderUnavailable(f"provider request failed: {exc}") from exc
        except ValueError as exc:
            raise ProviderUnavailable(f"provider returned non-JSON body: {exc}") from exc
        completion = body.get("completion")
        if not isinstance(completion, str):
            raise ProviderUnavailable("provider response carries no completion text")
        return completion


class ProviderSlot:
    """Holds the current provider for one agent role behind an atomic swap.

    Callers resolve the provider once per request via :meth:`get`;
    in-flight requests therefore finish on the provider they started
    with, while new requests route to the swapped-in one.
    """

    def __init__(self, provider: TextGenProvider):
        self._lock = threading.Lock()
        self._provider = provider

    def get(self) -> TextGenProvider:
        with self._lock:
            return self._provider

    def swap(self, provider: TextGenProvider) -> TextGenProvider:
        """Install a new provider; returns the previous one."""
        with self._lock:
            previous, self._provider = self._provider, provider
            return previous

    @property
    def provider_id(self) -> str:
        return self.get().provider_id


def resolve_provider(provider: "TextGenProvider | ProviderSlot") -> TextGenProvider:
    if isinstance(provider, ProviderSlot):
        return provider.get()
    return provider
