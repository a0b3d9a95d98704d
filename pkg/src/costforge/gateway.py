"""Backend-agnostic chat-completion access.

Prompt templates live as plain text files under ``prompts/`` so the exact
wording sent to a model can be audited and edited without touching code.
Placeholders use ``{name}`` syntax and rendering is strict: a placeholder
without a binding raises, and a rendered prompt never contains one.

Backends are registered under a tag. Two implementations ship here: an
HTTP chat-completion client and a deterministic scripted double for tests.
``complete`` retries transient failures with jittered exponential backoff
and reports wall-clock latency for the whole call, backoff included.

The clock, sleeper and jitter RNG are injectable so retry/latency behavior
is assertable with a fake clock.
"""

from __future__ import annotations

import hashlib
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol

import requests

from .errors import (
    BackendUnavailable,
    BudgetExceeded,
    ConfigError,
    InvariantViolation,
    MissingBinding,
    ScriptExhausted,
)

TEMPLATE_IDS = (
    "structure_select",
    "schema_construct",
    "trace_generate",
    "verify",
    "refine",
    "sufficiency_check",
    "semantic_score",
    "consistency_check",
    "two_hop_reason",
    "judge_score",
    "baseline_extract",
)

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")
_PROMPT_DIR = Path(__file__).parent / "prompts"

# temperature defaults: deterministic for anything judged, diverse for generation
GENERATION_TEMPLATE_IDS = ("trace_generate", "refine", "baseline_extract")
DEFAULT_GENERATION_TEMPERATURE = 0.7
DEFAULT_JUDGE_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 2048


@dataclass(frozen=True)
class PromptTemplate:
    """A named template body with ``{name}`` placeholders."""

    id: str
    body: str

    @property
    def placeholders(self) -> tuple[str, ...]:
        seen: list[str] = []
        for m in _PLACEHOLDER_RE.finditer(self.body):
            if m.group(1) not in seen:
                seen.append(m.group(1))
        return tuple(seen)

    def render(self, bindings: Mapping[str, str]) -> str:
        for name in self.placeholders:
            if name not in bindings:
                raise MissingBinding(name)

        def substitute(m: re.Match) -> str:
            return str(bindings[m.group(1)])

        return _PLACEHOLDER_RE.sub(substitute, self.body)

    @property
    def version(self) -> str:
        return hashlib.sha256(self.body.encode("utf-8")).hexdigest()[:8]


class TemplateLibrary:
    """Loads and caches the prompt templates from a directory."""

    def __init__(self, directory: Path | str | None = None):
        self.directory = Path(directory) if directory else _PROMPT_DIR
        self._cache: dict[str, PromptTemplate] = {}

    def get(self, template_id: str) -> PromptTemplate:
        if template_id not in self._cache:
            if template_id not in TEMPLATE_IDS:
                raise ConfigError(f"unknown template id: {template_id}")
            path = self.directory / f"{template_id}.txt"
            if not path.exists():
                raise ConfigError(f"template file missing: {path}")
            self._cache[template_id] = PromptTemplate(id=template_id, body=path.read_text())
        return self._cache[template_id]

    def render(self, template_id: str, bindings: Mapping[str, str]) -> str:
        return self.get(template_id).render(bindings)

    def versions(self) -> dict[str, str]:
        return {tid: self.get(tid).version for tid in TEMPLATE_IDS}


_DEFAULT_LIBRARY = TemplateLibrary()


def render_prompt(
    template_id: str, bindings: Mapping[str, str], library: TemplateLibrary | None = None
) -> str:
    """Render a template with bindings; raises MissingBinding on gaps."""
    return (library or _DEFAULT_LIBRARY).render(template_id, bindings)


def default_temperature(template_id: str) -> float:
    if template_id in GENERATION_TEMPLATE_IDS:
        return DEFAULT_GENERATION_TEMPERATURE
    return DEFAULT_JUDGE_TEMPERATURE


@dataclass(frozen=True)
class CompletionRequest:
    template_id: str
    bindings: Mapping[str, str]
    backend_tag: str
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float | None = None

    def __post_init__(self):
        if self.max_tokens < 1:
            raise InvariantViolation("max_tokens must be >= 1")
        if self.temperature is not None and self.temperature < 0:
            raise InvariantViolation("temperature must be >= 0")

    def effective_temperature(self) -> float:
        if self.temperature is not None:
            return self.temperature
        return default_temperature(self.template_id)


@dataclass(frozen=True)
class CompletionResult:
    text: str
    latency_seconds: float
    attempt_count: int
    token_counts: tuple[int, int] | None = None

    def __post_init__(self):
        if self.latency_seconds < 0:
            raise InvariantViolation("latency must be >= 0")
        if self.attempt_count < 1:
            raise InvariantViolation("attempt_count must be >= 1")


class TransientBackendFailure(Exception):
    """A retryable failure from a backend attempt."""


class Backend(Protocol):
    """A backend returns reply text, optionally with (prompt, completion)
    token counts as a second tuple element."""

    def generate(
        self, prompt: str, request: CompletionRequest
    ) -> "str | tuple[str, tuple[int, int]]": ...


@dataclass
class ScriptEntry:
    """One scripted interaction.

    ``match`` is a substring the rendered prompt must contain (``"*"``
    matches anything). ``fail`` entries raise a transient failure when
    served. Non-``repeat`` entries are consumed after one use.
    """

    match: str = "*"
    response: str = ""
    fail: bool = False
    repeat: bool = False
    consumed: bool = False

    def matches(self, prompt: str) -> bool:
        return self.match == "*" or self.match in prompt


class ScriptedBackend:
    """Deterministic test double serving canned responses in script order."""

    def __init__(self, script: Iterable[ScriptEntry | dict]):
        entries = []
        for entry in script:
            if isinstance(entry, dict):
                entry = ScriptEntry(
                    match=entry.get("match", "*"),
                    response=entry.get("response", ""),
                    fail=bool(entry.get("fail", False)),
                    repeat=bool(entry.get("repeat", False)),
                )
            entries.append(entry)
        if not entries:
            raise InvariantViolation("script is empty")
        self._entries = entries
        self._lock = threading.Lock()
        self.calls = 0

    def generate(self, prompt: str, request: CompletionRequest) -> str:
        with self._lock:
            self.calls += 1
            for entry in self._entries:
                if entry.consumed or not entry.matches(prompt):
                    continue
                if not entry.repeat:
                    entry.consumed = True
                if entry.fail:
                    raise TransientBackendFailure("scripted failure")
                return entry.response
            raise ScriptExhausted(f"no script entry matches prompt: {prompt[:80]!r}")


class HttpBackend:
    """Chat-completion client for an OpenAI-style endpoint.

    Request body: ``{model, messages: [{role, content}], max_tokens,
    temperature}``; the reply text is read from the first choice's message
    content. Base URL and key fall back to COSTFORGE_API_BASE and
    COSTFORGE_API_KEY.
    """

    def __init__(
        self,
        base_url: str | None = None,
        model: str = "gpt-4o",
        api_key: str | None = None,
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.base_url = (base_url or os.environ.get("COSTFORGE_API_BASE", "")).rstrip("/")
        if not self.base_url:
            raise ConfigError("http backend needs a base url (COSTFORGE_API_BASE)")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get("COSTFORGE_API_KEY")
        self.timeout = timeout
        self.session = session or requests.Session()

    def generate(self, prompt: str, request: CompletionRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": request.max_tokens,
            "temperature": request.effective_temperature(),
        }
        try:
            resp = self.session.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransientBackendFailure(str(exc)) from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransientBackendFailure(f"status {resp.status_code}")
        if resp.status_code != 200:
            raise BackendUnavailable(f"status {resp.status_code}: {resp.text[:200]}")
        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise TransientBackendFailure(f"bad response shape: {exc}") from exc
        usage = payload.get("usage") or {}
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            return text, (int(usage["prompt_tokens"]), int(usage["completion_tokens"]))
        return text


class _TokenBucket:
    """Requests-per-minute limiter; waits via the injected sleeper."""

    def __init__(self, rpm: float, clock: Callable[[], float]):
        self.capacity = float(rpm)
        self.rate = rpm / 60.0
        self.tokens = float(rpm)
        self.clock = clock
        self.last = clock()
        self.lock = threading.Lock()

    def acquire(self, sleeper: Callable[[float], None]) -> None:
        while True:
            with self.lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
                self.last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            sleeper(wait)


@dataclass(frozen=True)
class BackendRef:
    """A (gateway, tag) pair; the unit the pipeline passes around."""

    gateway: "Gateway"
    tag: str

    def complete_text(
        self,
        template_id: str,
        bindings: Mapping[str, str],
        temperature: float | None = None,
        max_tokens: int = DEFAULT_MAX_TOKENS,
    ) -> str:
        request = CompletionRequest(
            template_id=template_id,
            bindings=bindings,
            backend_tag=self.tag,
            max_tokens=max_tokens,
            temperature=temperature,
        )
        return self.gateway.complete(request).text

    def render(self, template_id: str, bindings: Mapping[str, str]) -> str:
        return self.gateway.render(template_id, bindings)


class Gateway:
    """Routes completion requests to registered backends with retries.

    Backoff is ``backoff_base * 2**attempt`` seconds, jittered by
    ``+/-jitter``, for up to ``max_attempts`` attempts. Reported latency is
    total elapsed clock time for the call, including backoff sleeps.
    """

    def __init__(
        self,
        templates: TemplateLibrary | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        jitter: float = 0.2,
        rpm: float | None = None,
        max_calls: int | None = None,
    ):
        self.templates = templates or _DEFAULT_LIBRARY
        self.clock = clock
        self.sleeper = sleeper
        self.rng = rng or random.Random()
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.jitter = jitter
        self.rpm = rpm
        self.max_calls = max_calls
        self._backends: dict[str, Backend] = {}
        self._buckets: dict[str, _TokenBucket] = {}
        self._lock = threading.Lock()
        self.call_count = 0

    def register(self, tag: str, backend: Backend) -> Backend:
        with self._lock:
            self._backends[tag] = backend
            if self.rpm:
                self._buckets[tag] = _TokenBucket(self.rpm, self.clock)
        return backend

    def register_scripted_backend(self, tag: str, script: Iterable[ScriptEntry | dict]) -> ScriptedBackend:
        backend = ScriptedBackend(script)
        self.register(tag, backend)
        return backend

    def render(self, template_id: str, bindings: Mapping[str, str]) -> str:
        return self.templates.render(template_id, bindings)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        with self._lock:
            backend = self._backends.get(request.backend_tag)
            if backend is None:
                raise ConfigError(f"no backend registered under tag {request.backend_tag!r}")
            if self.max_calls is not None and self.call_count >= self.max_calls:
                raise BudgetExceeded(f"call budget of {self.max_calls} exhausted")
            self.call_count += 1
            bucket = self._buckets.get(request.backend_tag)
        if bucket is not None:
            bucket.acquire(self.sleeper)

        prompt = self.render(request.template_id, request.bindings)
        start = self.clock()
        last_failure: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                reply = backend.generate(prompt, request)
            except TransientBackendFailure as exc:
                last_failure = exc
                if attempt < self.max_attempts:
                    factor = 1.0 + self.jitter * (2.0 * self.rng.random() - 1.0)
                    self.sleeper(self.backoff_base * (2 ** (attempt - 1)) * factor)
                continue
            text, token_counts = reply if isinstance(reply, tuple) else (reply, None)
            return CompletionResult(
                text=text,
                latency_seconds=self.clock() - start,
                attempt_count=attempt,
                token_counts=token_counts,
            )
        raise BackendUnavailable(
            f"{request.backend_tag}: {self.max_attempts} attempts failed ({last_failure})"
        )
