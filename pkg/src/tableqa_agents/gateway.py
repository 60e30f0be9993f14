"""Provider-abstracted chat-completion client.

One gateway instance serves every agent role; outbound calls carry a role
and are tallied per (question, role) in a thread-safe ledger. Providers are
pluggable: a deterministic scripted provider for tests and fixtures, and an
HTTP provider speaking the common chat-completions JSON shape.
"""

from __future__ import annotations

import ast
import hashlib
import json
import re
import threading
from collections import defaultdict, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Protocol

import httpx


class AgentRole(str, Enum):
    COTA = "CoTA"
    POTA = "PoTA"
    T2SA = "t2SA"
    PDA = "PDA"
    SDA = "SDA"
    JA = "JA"
    FM = "FM"


class GatewayError(RuntimeError):
    """Base class for provider and parsing failures."""


class ProviderUnreachable(GatewayError):
    pass


class ProviderError(GatewayError):
    def __init__(self, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.status = status


class GatewayTimeout(GatewayError):
    pass


class JsonNotFound(GatewayError):
    pass


class MissingKey(GatewayError):
    def __init__(self, key: str):
        super().__init__(f"missing required key: {key}")
        self.key = key


@dataclass(frozen=True)
class ChatRequest:
    role: AgentRole
    prompt: str
    model: str
    temperature: float = 0.0
    max_tokens: int = 1024
    question_id: str = ""

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


class Provider(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


class CallLedger:
    """Thread-safe (question_id, role) call counter."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts: dict[tuple[str, str], int] = defaultdict(int)

    def record(self, question_id: str, role: AgentRole) -> None:
        with self._lock:
            self._counts[(question_id, role.value)] += 1

    def count(self, question_id: str, role: AgentRole) -> int:
        with self._lock:
            return self._counts[(question_id, role.value)]

    def for_question(self, question_id: str) -> dict[str, int]:
        with self._lock:
            return {
                role: n
                for (qid, role), n in sorted(self._counts.items())
                if qid == question_id
            }

    def totals_by_role(self) -> dict[str, int]:
        with self._lock:
            totals: dict[str, int] = {role.value: 0 for role in AgentRole}
            for (_, role), n in self._counts.items():
                totals[role] += n
            return totals

    def total(self) -> int:
        with self._lock:
            return sum(self._counts.values())


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ScriptedProvider:
    """Deterministic provider for tests and offline runs.

    Lookup order per request: exact (role, prompt-hash) entry, then the
    role's handler callable, then the role's FIFO queue. A miss raises
    ProviderError so broken fixtures fail loudly.
    """

    def __init__(self) -> None:
        self._exact: dict[tuple[str, str], str] = {}
        self._queues: dict[str, deque[str]] = defaultdict(deque)
        self._handlers: dict[str, Callable[[str], Optional[str]]] = {}

    def script(self, role: AgentRole, response: str, prompt: Optional[str] = None) -> "ScriptedProvider":
        if prompt is None:
            self._queues[role.value].append(response)
        else:
            self._exact[(role.value, prompt_key(prompt))] = response
        return self

    def on(self, role: AgentRole, handler: Callable[[str], Optional[str]]) -> "ScriptedProvider":
        self._handlers[role.value] = handler
        return self

    def complete(self, request: ChatRequest) -> str:
        exact = self._exact.get((request.role.value, prompt_key(request.prompt)))
        if exact is not None:
            return exact
        handler = self._handlers.get(request.role.value)
        if handler is not None:
            handled = handler(request.prompt)
            if handled is not None:
                return handled
        queue = self._queues.get(request.role.value)
        if queue:
            return queue.popleft()
        raise ProviderError(f"no scripted response for role {request.role.value}")

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "responses": [
                {"role": role, "prompt_sha256": digest, "response": text}
                for (role, digest), text in sorted(self._exact.items())
            ],
            "queues": {role: list(q) for role, q in sorted(self._queues.items()) if q},
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScriptedProvider":
        provider = cls()
        for entry in data.get("responses", []):
            provider._exact[(entry["role"], entry["prompt_sha256"])] = entry["response"]
        for role, responses in data.get("queues", {}).items():
            provider._queues[role].extend(responses)
        return provider

    @classmethod
    def load(cls, path: str) -> "ScriptedProvider":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class HttpProvider:
    """Chat-completions client for local or hosted model servers."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        timeout: float = 120.0,
        client: Optional[httpx.Client] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, request: ChatRequest) -> str:
        payload = {
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self._client.post(
                f"{self.base_url}/chat/completions", json=payload, headers=headers
            )
        except httpx.TimeoutException as exc:
            raise GatewayTimeout(f"{request.role.value}: {exc}") from exc
        except httpx.TransportError as exc:
            raise ProviderUnreachable(f"{request.role.value}: {exc}") from exc
        if response.status_code != 200:
            raise ProviderError(
                f"{request.role.value}: provider returned {response.status_code}",
                status=response.status_code,
            )
        try:
            data = response.json()
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"{request.role.value}: malformed provider response") from exc


@dataclass
class GatewayConfig:
    models: Mapping[str, str] = field(default_factory=dict)
    default_model: str = "default"
    temperature: float = 0.0
    max_tokens: int = 1024

    def model_for(self, role: AgentRole) -> str:
        return self.models.get(role.value, self.default_model)


class LlmGateway:
    """Routes per-role completions through the configured provider."""

    def __init__(self, provider: Provider, config: Optional[GatewayConfig] = None):
        self.provider = provider
        self.config = config or GatewayConfig()
        self.ledger = CallLedger()

    def complete(self, role: AgentRole, prompt: str, question_id: str = "") -> str:
        request = ChatRequest(
            role=role,
            prompt=prompt,
            model=self.config.model_for(role),
            temperature=self.config.temperature,
            max_tokens=self.config.max_tokens,
            question_id=question_id,
        )
        self.ledger.record(question_id, role)
        return self.provider.complete(request)


_FENCE = re.compile(r"```(?:[a-zA-Z0-9_-]+)?\s*\n(.*?)```", re.DOTALL)
def _candidate_regions(raw: str) -> Iterable[str]:
    for fenced in _FENCE.findall(raw):
        if "{" in fenced:
            yield fenced
    yield raw


def _decode_pythonish(body: str) -> str:
    """Interpret the escape sequences model replies plausibly contain."""
    return (
        body.replace("\\\\", "\x00")
        .replace("\\'", "'")
        .replace('\\"', '"')
        .replace("\\n", "\n")
        .replace("\\t", "\t")
        .replace("\x00", "\\")
    )


def _repair_to_json(text: str) -> Optional[str]:
    """Rewrite a Python-ish dict literal (single quotes, triple quotes, raw
    newlines inside strings) into strict JSON."""
    out: list[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in "'\"":
            if text.startswith(ch * 3, i):
                end = text.find(ch * 3, i + 3)
                if end == -1:
                    return None
                body = text[i + 3 : end]
                i = end + 3
            else:
                j = i + 1
                chars: list[str] = []
                while j < n:
                    c = text[j]
                    if c == "\\" and j + 1 < n:
                        chars.append(c)
                        chars.append(text[j + 1])
                        j += 2
                        continue
                    if c == ch:
                        break
                    chars.append(c)
                    j += 1
                if j >= n:
                    return None
                body = _decode_pythonish("".join(chars))
                i = j + 1
            out.append(json.dumps(body))
        else:
            out.append(ch)
            i += 1
    candidate = "".join(out)
    candidate = re.sub(r"\bTrue\b", "true", candidate)
    candidate = re.sub(r"\bFalse\b", "false", candidate)
    candidate = re.sub(r"\bNone\b", "null", candidate)
    candidate = re.sub(r",\s*([}\]])", r"\1", candidate)
    return candidate


def _try_parse(text: str) -> Optional[dict]:
    for parser in (lambda t: json.loads(t, strict=False), ast.literal_eval):
        try:
            parsed = parser(text)
        except Exception:
            continue
        if isinstance(parsed, dict):
            return parsed
    repaired = _repair_to_json(text)
    if repaired is not None and repaired != text:
        try:
            parsed = json.loads(repaired, strict=False)
        except Exception:
            return None
        if isinstance(parsed, dict):
            return parsed
    return None


def extract_json(raw: str, required_keys: Iterable[str] = ()) -> dict[str, str]:
    """Extract the first JSON-like object from a model reply.

    Tolerates code fences, single-quoted keys/strings and triple-quoted code
    values. Values are coerced to strings. Raises JsonNotFound when no object
    parses, MissingKey when a required key is absent.
    """
    required = list(required_keys)
    parsed: Optional[dict] = None
    for region in _candidate_regions(raw):
        opens = [m.start() for m in re.finditer(r"\{", region)][:8]
        closes = [m.start() for m in re.finditer(r"\}", region)]
        for start in opens:
            for end in reversed(closes):
                if end <= start:
                    break
                parsed = _try_parse(region[start : end + 1])
                if parsed is not None:
                    break
            if parsed is not None:
                break
        if parsed is not None:
            break
    if parsed is None:
        raise JsonNotFound("no JSON object found in model reply")
    result = {str(k): v if isinstance(v, str) else _render_json_value(v) for k, v in parsed.items()}
    for key in required:
        if key not in result:
            raise MissingKey(key)
    return result


def _render_json_value(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float) and value == int(value) and abs(value) < 1e16:
        return str(int(value))
    if isinstance(value, (list, dict)):
        return json.dumps(value)
    return str(value)
