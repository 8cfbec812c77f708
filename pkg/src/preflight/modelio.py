"""Model-client abstraction: chat completions, playback replay, usage, grades.

Two backends share one contract: ``complete(request) -> ModelResponse``. The
HTTP backend speaks the chat-completions wire format; the playback backend
replays recorded exchanges keyed by (tag, per-tag sequence index) so the whole
pipeline runs offline and deterministically.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field

TAGS = ("generator", "verifier", "rubric_gen")
DEFAULT_TEMPERATURES = {"generator": 0.7, "verifier": 0.0, "rubric_gen": 0.0}

GRADE_LETTERS = "ABCDEFGHIJKLMNOPQRST"


class TransportError(Exception):
    pass


class BackendUnsupported(Exception):
    pass


class ScriptExhausted(Exception):
    pass


class ScriptMismatch(Exception):
    pass


class GradeParseFailure(Exception):
    pass


@dataclass(frozen=True)
class Message:
    role: str  # system | user
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user"):
            raise ValueError(f"unknown message role {self.role!r}")


@dataclass(frozen=True)
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")


@dataclass(frozen=True)
class ModelRequest:
    messages: tuple[Message, ...]
    tag: str
    temperature: float | None = None
    want_top_logprobs: int | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.tag not in TAGS:
            raise ValueError(f"unknown request tag {self.tag!r}")
        object.__setattr__(self, "messages", tuple(self.messages))
        if self.temperature is None:
            object.__setattr__(self, "temperature", DEFAULT_TEMPERATURES[self.tag])


@dataclass(frozen=True)
class ModelResponse:
    text: str
    usage: Usage
    latency_ms: float
    first_token_logprobs: tuple[tuple[str, float], ...] | None = None


def request_hash(request: ModelRequest) -> str:
    payload = {
        "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        "temperature": request.temperature,
        "want_top_logprobs": request.want_top_logprobs,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


class UsageLedger:
    """Thread-safe append-only record of every model call."""

    def __init__(self) -> None:
        self._records: list[tuple[str, Usage, float]] = []
        self._lock = threading.Lock()

    def record(self, tag: str, usage: Usage, latency_ms: float) -> None:
        with self._lock:
            self._records.append((tag, usage, latency_ms))

    @property
    def records(self) -> list[tuple[str, Usage, float]]:
        with self._lock:
            return list(self._records)

    def totals(self) -> dict[str, float]:
        records = self.records
        return {
            "calls": len(records),
            "input_tokens": sum(u.input_tokens for _, u, _ in records),
            "output_tokens": sum(u.output_tokens for _, u, _ in records),
            "latency_ms": sum(lat for _, _, lat in records),
        }


@dataclass(frozen=True)
class ScriptEntry:
    tag: str
    index: int
    text: str
    usage: Usage = field(default_factory=Usage)
    latency_ms: float = 0.0
    first_token_logprobs: tuple[tuple[str, float], ...] | None = None
    request_hash: str | None = None

    def to_json(self) -> dict:
        doc: dict = {
            "tag": self.tag,
            "index": self.index,
            "text": self.text,
            "usage": {"input_tokens": self.usage.input_tokens, "output_tokens": self.usage.output_tokens},
            "latency_ms": self.latency_ms,
        }
        if self.first_token_logprobs is not None:
            doc["first_token_logprobs"] = [[t, lp] for t, lp in self.first_token_logprobs]
        if self.request_hash is not None:
            doc["request_hash"] = self.request_hash
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ScriptEntry":
        usage = doc.get("usage", {})
        logprobs = doc.get("first_token_logprobs")
        return cls(
            tag=doc["tag"],
            index=int(doc["index"]),
            text=doc["text"],
            usage=Usage(int(usage.get("input_tokens", 0)), int(usage.get("output_tokens", 0))),
            latency_ms=float(doc.get("latency_ms", 0.0)),
            first_token_logprobs=tuple((t, float(lp)) for t, lp in logprobs) if logprobs is not None else None,
            request_hash=doc.get("request_hash"),
        )


class PlaybackBackend:
    """Deterministic backend replaying a recorded exchange script.

    Entries are consumed per tag in index order; exhausting a tag's entries or
    (in strict mode) a request-hash mismatch is an error.
    """

    def __init__(self, entries: list[ScriptEntry], strict: bool = False, ledger: UsageLedger | None = None):
        self.strict = strict
        self.ledger = ledger
        self._by_tag: dict[str, list[ScriptEntry]] = {tag: [] for tag in TAGS}
        for entry in entries:
            if entry.tag not in self._by_tag:
                raise ValueError(f"script entry with unknown tag {entry.tag!r}")
            self._by_tag[entry.tag].append(entry)
        for tag, tag_entries in self._by_tag.items():
            for i, entry in enumerate(tag_entries):
                if entry.index != i:
                    raise ValueError(f"script entries for tag {tag!r} are not densely indexed (saw {entry.index} at {i})")
        self._cursor = {tag: 0 for tag in TAGS}
        self._lock = threading.Lock()

    @classmethod
    def from_jsonl(cls, path: str, strict: bool = False, ledger: UsageLedger | None = None) -> "PlaybackBackend":
        entries = []
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line:
                    entries.append(ScriptEntry.from_json(json.loads(line)))
        return cls(entries, strict=strict, ledger=ledger)

    def complete(self, request: ModelRequest) -> ModelResponse:
        with self._lock:
            cursor = self._cursor[request.tag]
            entries = self._by_tag[request.tag]
            if cursor >= len(entries):
                raise ScriptExhausted(f"no scripted response left for tag {request.tag!r} (consumed {cursor})")
            entry = entries[cursor]
            self._cursor[request.tag] = cursor + 1
        if self.strict and entry.request_hash is not None and entry.request_hash != request_hash(request):
            raise ScriptMismatch(f"request hash mismatch for tag {request.tag!r} index {entry.index}")
        if request.want_top_logprobs is not None and entry.first_token_logprobs is None:
            raise BackendUnsupported(f"scripted entry (tag {request.tag!r}, index {entry.index}) has no logprobs")
        logprobs = entry.first_token_logprobs if request.want_top_logprobs is not None else None
        response = ModelResponse(
            text=entry.text, usage=entry.usage, latency_ms=entry.latency_ms, first_token_logprobs=logprobs
        )
        if self.ledger is not None:
            self.ledger.record(request.tag, response.usage, response.latency_ms)
        return response


class HttpBackend:
    """Chat-completions-compatible HTTP client with bounded retries."""

    def __init__(
        self,
        base_url: str,
        model: str,
        auth_env: str | None = None,
        max_retries: int = 2,
        backoff_s: float = 0.25,
        timeout_s: float = 60.0,
        ledger: UsageLedger | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.auth_env = auth_env
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self.ledger = ledger

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, request: ModelRequest) -> ModelResponse:
        payload: dict = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
        }
        if request.want_top_logprobs is not None:
            payload["logprobs"] = True
            payload["top_logprobs"] = request.want_top_logprobs
        if request.seed is not None:
            payload["seed"] = request.seed
        body = json.dumps(payload).encode("utf-8")
        url = self.base_url + "/chat/completions"

        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            started = time.perf_counter()
            try:
                http_request = urllib.request.Request(url, data=body, headers=self._headers(), method="POST")
                with urllib.request.urlopen(http_request, timeout=self.timeout_s) as raw:
                    doc = json.loads(raw.read().decode("utf-8"))
                latency_ms = (time.perf_counter() - started) * 1000.0
                return self._decode(request, doc, latency_ms)
            except urllib.error.HTTPError as exc:
                if exc.code >= 500:
                    last_error = exc
                else:
                    raise TransportError(f"HTTP {exc.code} from backend: {exc.reason}") from exc
            except (urllib.error.URLError, TimeoutError, ConnectionError, json.JSONDecodeError) as exc:
                last_error = exc
            if attempt < self.max_retries:
                time.sleep(self.backoff_s * (2**attempt))
        raise TransportError(f"backend unreachable after {self.max_retries + 1} attempts: {last_error}")

    def _decode(self, request: ModelRequest, doc: dict, latency_ms: float) -> ModelResponse:
        try:
            choice = doc["choices"][0]
            text = choice["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc
        usage_doc = doc.get("usage") or {}
        usage = Usage(int(usage_doc.get("prompt_tokens", 0)), int(usage_doc.get("completion_tokens", 0)))
        logprobs = None
        if request.want_top_logprobs is not None:
            content = ((choice.get("logprobs") or {}).get("content")) or []
            if not content:
                raise BackendUnsupported("backend returned no token logprobs")
            top = content[0].get("top_logprobs") or []
            logprobs = tuple((t["token"], float(t["logprob"])) for t in top)
        response = ModelResponse(text=text, usage=usage, latency_ms=latency_ms, first_token_logprobs=logprobs)
        if self.ledger is not None:
            self.ledger.record(request.tag, usage, latency_ms)
        return response


# --- Expected-grade scoring ---------------------------------------------------


@dataclass(frozen=True)
class GradeDistribution:
    """Probabilities over valid letter grades, renormalized to sum to 1.

    ``coverage`` is the probability mass the valid grades held before
    renormalization.
    """

    entries: tuple[tuple[str, float], ...]
    coverage: float


def grade_value(index: int) -> float:
    """Linear descending grade value: first letter 1.0, last letter 0.0."""
    return 1.0 - index / (len(GRADE_LETTERS) - 1)


def grade_distribution(first_token_logprobs: tuple[tuple[str, float], ...], k: int | None = None) -> GradeDistribution:
    taken = first_token_logprobs[:k] if k is not None else first_token_logprobs
    mass: dict[str, float] = {}
    for token, logprob in taken:
        letter = token.strip().upper()
        if len(letter) == 1 and letter in GRADE_LETTERS:
            mass[letter] = mass.get(letter, 0.0) + math.exp(logprob)
    if not mass:
        raise GradeParseFailure("no valid grade letter among the top tokens")
    coverage = sum(mass.values())
    entries = tuple((letter, p / coverage) for letter, p in sorted(mass.items()))
    return GradeDistribution(entries=entries, coverage=coverage)


def expected_grade_score(first_token_logprobs: tuple[tuple[str, float], ...], k: int | None = None) -> float:
    """Probability-weighted mean grade value over the valid grade tokens."""
    dist = grade_distribution(first_token_logprobs, k)
    return sum(p * grade_value(GRADE_LETTERS.index(letter)) for letter, p in dist.entries)
