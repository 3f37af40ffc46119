"""Secret handling: late-bound sources, env injection, and output masking.

Secrets are registered per conversation under environment-variable-style
names.  Values are only materialized when a command actually mentions the
name (:meth:`SecretRegistry.scan_and_env`), and every value that was ever
materialized is masked out of all text the runtime emits afterwards, even
after the secret rotates to a new value.
"""

from __future__ import annotations

import logging
import re
import threading
from typing import Any, Callable, Mapping, Union

import httpx

from .errors import AgentRtError

logger = logging.getLogger(__name__)

SECRET_MASK = "<secret-hidden>"

#: Values shorter than this are never masked: replacing every occurrence of
#: a 1-3 character string would shred ordinary output.
MIN_MASKABLE_LENGTH = 4

_TOKEN_SPLIT_RE = re.compile(r"""[\s;&|<>(){}`'"=$]+""")


class SourceFailure(AgentRtError):
    """A secret source raised or returned a non-string."""


class StaticValue:
    """A secret known up front."""

    def __init__(self, value: str) -> None:
        self._value = value

    def get(self) -> str:
        return self._value

    def __repr__(self) -> str:
        return f"StaticValue({SECRET_MASK})"


class CallableSource:
    """A secret fetched on demand; the callable runs at injection time."""

    def __init__(self, provider: Callable[[], str]) -> None:
        self._provider = provider

    def get(self) -> str:
        value = self._provider()
        if not isinstance(value, str):
            raise SourceFailure(f"secret source returned {type(value).__name__}, not str")
        return value

    def __repr__(self) -> str:
        return f"CallableSource({SECRET_MASK})"


SecretSource = Union[StaticValue, CallableSource]


def http_source(
    url: str,
    *,
    headers: Mapping[str, str] | None = None,
    json_field: str | None = None,
    timeout: float = 10.0,
) -> CallableSource:
    """A source that GETs its value from an HTTP endpoint when needed.

    The whole response body is the secret, unless ``json_field`` names a key
    to pull out of a JSON response.
    """

    def fetch() -> str:
        try:
            response = httpx.get(url, headers=dict(headers or {}), timeout=timeout)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise SourceFailure(f"secret fetch from {url} failed: {exc}") from exc
        if json_field is not None:
            try:
                value = response.json()[json_field]
            except (KeyError, ValueError) as exc:
                raise SourceFailure(
                    f"secret response from {url} has no field {json_field!r}"
                ) from exc
            if not isinstance(value, str):
                raise SourceFailure(f"secret field {json_field!r} is not a string")
            return value
        return response.text

    return CallableSource(fetch)


def shellish_tokens(command: str) -> set[str]:
    """Whole tokens of a command under shell-ish splitting.

    Quotes, substitution syntax, and operators all act as separators, so
    ``echo "$API_KEY"`` and ``X=${API_KEY}`` both expose the token API_KEY,
    while MONKEY does not contain the token KEY.
    """
    return {token for token in _TOKEN_SPLIT_RE.split(command) if token}


class SecretRegistry:
    """Per-conversation secret store with masking memory.

    Thread-safe on its own; conversations additionally serialize updates
    through the state lock.
    """

    def __init__(self, secrets: Mapping[str, str | SecretSource] | None = None) -> None:
        self._lock = threading.Lock()
        self._sources: dict[str, SecretSource] = {}
        self._revealed: list[str] = []  # every value ever handed out
        if secrets:
            self.update(secrets)

    def update(self, secrets: Mapping[str, str | SecretSource]) -> None:
        """Add or replace secrets.  Values are not fetched here; sources are
        consulted only when a command references the name (late binding).
        Replacing a name keeps the old value masked if it was ever used."""
        with self._lock:
            for name, source in secrets.items():
                if isinstance(source, str):
                    source = StaticValue(source)
                self._sources[name] = source

    def names(self) -> list[str]:
        with self._lock:
            return sorted(self._sources)

    def describe(self) -> dict[str, str]:
        """Serializable summary; never includes values."""
        return {name: SECRET_MASK for name in self.names()}

    def _record_revealed(self, value: str) -> None:
        if len(value) < MIN_MASKABLE_LENGTH:
            logger.warning(
                "secret value of length %d is too short to mask reliably", len(value)
            )
            return
        if value not in self._revealed:
            self._revealed.append(value)

    def scan_and_env(self, command: str) -> dict[str, str]:
        """Environment variables for the secrets a command actually names.

        Sources that fail are skipped with a warning; the command still runs
        without that variable.
        """
        tokens = shellish_tokens(command)
        env: dict[str, str] = {}
        with self._lock:
            wanted = [name for name in self._sources if name in tokens]
            for name in wanted:
                try:
                    value = self._sources[name].get()
                except Exception as exc:
                    logger.warning("secret source %s failed: %s", name, exc)
                    continue
                env[name] = value
                self._record_revealed(value)
        return env

    def reveal(self, name: str) -> str | None:
        """Fetch one secret by name (recording it for masking)."""
        with self._lock:
            source = self._sources.get(name)
            if source is None:
                return None
            value = source.get()
            self._record_revealed(value)
            return value

    def mask(self, text: str) -> str:
        """Replace every ever-revealed value in ``text`` with the mask.

        Longest values first, so overlapping secrets cannot re-expose a
        substring of a longer one.
        """
        if not text:
            return text
        with self._lock:
            values = sorted(self._revealed, key=len, reverse=True)
        for value in values:
            if value in text:
                text = text.replace(value, SECRET_MASK)
        return text

    def mask_json(self, value: Any) -> Any:
        """Recursively mask every string inside a JSON-ish structure."""
        if isinstance(value, str):
            return self.mask(value)
        if isinstance(value, list):
            return [self.mask_json(v) for v in value]
        if isinstance(value, tuple):
            return tuple(self.mask_json(v) for v in value)
        if isinstance(value, dict):
            return {k: self.mask_json(v) for k, v in value.items()}
        return value
