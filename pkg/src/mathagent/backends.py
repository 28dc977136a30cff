"""Model backends: OpenAI-compatible HTTP, scripted fixtures, replay cache.

Every request has a stable SHA-256 fingerprint computed over a canonical
JSON form of (model_id, system_prompt, segments, temperature, max_tokens):

    {"max_tokens": int, "model_id": str, "segments": [...],
     "system_prompt": str, "temperature": float}

serialized with sorted keys, separators (",", ":"), ensure_ascii=False,
UTF-8 encoded, then hashed. Text segments appear as
{"kind": "text", "text": ...}; image segments as
{"kind": "image", "media_type": ..., "sha256": ...} where the digest is
over the decoded image bytes (file contents for file refs, the URL string
for url refs, since remote bytes are not fetched). The phase and sample_id
routing metadata never enter the fingerprint.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
import mimetypes
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Protocol

import requests

from .data_model import ImageKind, ImageRef


class BackendError(Exception):
    """Base class for backend failures."""


class AuthError(BackendError):
    """Credential problem (401/403 or missing key). Never retried."""


class TransportError(BackendError):
    """Transport-level failure that survived the retry budget."""


class BadResponse(BackendError):
    """The endpoint answered with a body we cannot interpret."""


class ScriptMiss(BackendError):
    """A scripted backend had no reply for the request."""


class FinishReason(enum.Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class TextSegment:
    text: str


@dataclass(frozen=True)
class ImageSegment:
    ref: ImageRef


Segment = TextSegment | ImageSegment


@dataclass(frozen=True)
class ModelRequest:
    model_id: str
    system_prompt: str
    segments: tuple[Segment, ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    # routing metadata for scripted fixtures and traces; not fingerprinted
    phase: str = ""
    sample_id: str | None = None

    def __post_init__(self):
        if not self.segments:
            raise ValueError("request needs at least one segment")
        images = [s for s in self.segments if isinstance(s, ImageSegment)]
        if len(images) > 1:
            raise ValueError("at most one image segment per request")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ModelResponse:
    text: str
    finish_reason: FinishReason
    latency_ms: float
    from_cache: bool = False


@dataclass(frozen=True)
class RequestSettings:
    """Per-phase knobs applied to every request an agent builds."""

    model_id: str = "scripted"
    system_prompt: str = ""
    temperature: float = 0.0
    max_tokens: int = 1024


class Backend(Protocol):
    def complete(self, request: ModelRequest) -> ModelResponse: ...


def _image_identity(ref: ImageRef) -> tuple[str, str]:
    """(media_type, sha256 hex) pair identifying an image for fingerprints."""
    if ref.kind is ImageKind.INLINE_BASE64:
        data = ref.decoded_bytes()
        media = ref.media_type or "application/octet-stream"
    elif ref.kind is ImageKind.FILE_PATH:
        data = Path(ref.value).read_bytes()
        media = ref.media_type or mimetypes.guess_type(ref.value)[0] or "image/png"
    else:  # URL: remote bytes are out of reach, the address is the identity
        data = ref.value.encode("utf-8")
        media = ref.media_type or "image/png"
    return media, hashlib.sha256(data).hexdigest()


def canonical_request_payload(request: ModelRequest) -> dict:
    segments = []
    for seg in request.segments:
        if isinstance(seg, TextSegment):
            segments.append({"kind": "text", "text": seg.text})
        else:
            media, digest = _image_identity(seg.ref)
            segments.append({"kind": "image", "media_type": media, "sha256": digest})
    return {
        "max_tokens": request.max_tokens,
        "model_id": request.model_id,
        "segments": segments,
        "system_prompt": request.system_prompt,
        "temperature": request.temperature,
    }


def canonical_request_bytes(request: ModelRequest) -> bytes:
    payload = canonical_request_payload(request)
    return json.dumps(
        payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def request_fingerprint(request: ModelRequest) -> str:
    return hashlib.sha256(canonical_request_bytes(request)).hexdigest()


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base_ms: int = 250


def _image_data_url(ref: ImageRef) -> str:
    if ref.kind is ImageKind.URL:
        return ref.value
    if ref.kind is ImageKind.INLINE_BASE64:
        return f"data:{ref.media_type};base64,{ref.value}"
    data = Path(ref.value).read_bytes()
    media = ref.media_type or mimetypes.guess_type(ref.value)[0] or "image/png"
    return f"data:{media};base64,{base64.b64encode(data).decode('ascii')}"


def _requests_transport(url, headers, body, timeout_s):
    """Default transport. Raises ConnectionError/TimeoutError on IO trouble."""
    try:
        resp = requests.post(url, headers=headers, json=body, timeout=timeout_s)
    except requests.Timeout as exc:
        raise TimeoutError(str(exc)) from exc
    except requests.RequestException as exc:
        raise ConnectionError(str(exc)) from exc
    return resp.status_code, resp.text


class HttpBackend:
    """Chat-completions client for OpenAI-compatible endpoints.

    Retries 429, 5xx, and transport IO errors with exponential backoff;
    401/403 raise AuthError immediately. rate_limit bounds the number of
    in-flight requests across threads.
    """

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "MATHAGENT_API_KEY",
        retry: RetryPolicy = RetryPolicy(),
        rate_limit: int = 4,
        timeout_s: float = 60.0,
        transport: Callable = _requests_transport,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.retry = retry
        self.timeout_s = timeout_s
        self._transport = transport
        self._sleep = sleep
        self._gate = threading.Semaphore(max(1, rate_limit))

    def _build_body(self, request: ModelRequest) -> dict:
        content = []
        for seg in request.segments:
            if isinstance(seg, TextSegment):
                content.append({"type": "text", "text": seg.text})
            else:
                content.append(
                    {"type": "image_url", "image_url": {"url": _image_data_url(seg.ref)}}
                )
        messages = []
        if request.system_prompt:
            messages.append({"role": "system", "content": request.system_prompt})
        messages.append({"role": "user", "content": content})
        return {
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def complete(self, request: ModelRequest) -> ModelResponse:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise AuthError(f"environment variable {self.api_key_env} is not set")
        headers = {
            "Authorization": f"Bearer {key}",
            "Content-Type": "application/json",
        }
        url = f"{self.base_url}/chat/completions"
        body = self._build_body(request)

        attempts = max(1, self.retry.max_attempts)
        last_failure = "no attempt made"
        started = time.monotonic()
        for attempt in range(1, attempts + 1):
            try:
                with self._gate:
                    status, text = self._transport(url, headers, body, self.timeout_s)
            except (ConnectionError, TimeoutError) as exc:
                last_failure = f"transport error: {exc}"
            else:
                if status in (401, 403):
                    raise AuthError(f"HTTP {status} from {url}")
                if status == 429 or 500 <= status < 600:
                    last_failure = f"HTTP {status}"
                elif not 200 <= status < 300:
                    raise TransportError(f"HTTP {status} from {url}: {text[:200]}")
                else:
                    latency_ms = (time.monotonic() - started) * 1000.0
                    return self._parse_body(text, latency_ms)
            if attempt < attempts:
                backoff_s = self.retry.backoff_base_ms / 1000.0 * (2 ** (attempt - 1))
                self._sleep(backoff_s)
        raise TransportError(f"gave up after {attempts} attempts: {last_failure}")

    @staticmethod
    def _parse_body(text: str, latency_ms: float) -> ModelResponse:
        try:
            payload = json.loads(text)
            choice = payload["choices"][0]
            content = choice["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise BadResponse(f"malformed completion body: {exc}") from exc
        if not isinstance(content, str):
            raise BadResponse("message content is not a string")
        raw_reason = choice.get("finish_reason")
        if raw_reason == "stop":
            reason = FinishReason.STOP
        elif raw_reason == "length":
            reason = FinishReason.LENGTH
        else:
            reason = FinishReason.ERROR
        return ModelResponse(text=content, finish_reason=reason, latency_ms=latency_ms)


class ScriptedBackend:
    """Deterministic fixture backend.

    Replies are looked up by fingerprint first, then by (phase, sample_id),
    then a default reply. A list value is consumed one element per call to
    the same key (the last element repeats once exhausted), which scripts
    multi-turn behaviour such as a re-ask. Latency is always 0.0 so runs
    are byte-reproducible.
    """

    def __init__(
        self,
        phases: Mapping[str, Mapping[str, str | list[str]]] | None = None,
        by_fingerprint: Mapping[str, str | list[str]] | None = None,
        default_reply: str | None = None,
    ):
        self.phases = {p: dict(v) for p, v in (phases or {}).items()}
        self.by_fingerprint = dict(by_fingerprint or {})
        self.default_reply = default_reply
        self._cursor: dict[tuple, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "ScriptedBackend":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(
            phases=data.get("phases"),
            by_fingerprint=data.get("by_fingerprint"),
            default_reply=data.get("default_reply"),
        )

    def _take(self, key: tuple, value: str | list[str]) -> str:
        if isinstance(value, str):
            return value
        if not value:
            raise ScriptMiss(f"empty reply list for {key}")
        with self._lock:
            idx = self._cursor.get(key, 0)
            self._cursor[key] = idx + 1
        return value[min(idx, len(value) - 1)]

    def complete(self, request: ModelRequest) -> ModelResponse:
        fp = request_fingerprint(request)
        if fp in self.by_fingerprint:
            text = self._take(("fp", fp), self.by_fingerprint[fp])
        else:
            by_sample = self.phases.get(request.phase, {})
            if request.sample_id in by_sample:
                key = ("ps", request.phase, request.sample_id)
                text = self._take(key, by_sample[request.sample_id])
            elif self.default_reply is not None:
                text = self.default_reply
            else:
                raise ScriptMiss(
                    f"no scripted reply for phase={request.phase!r} "
                    f"sample={request.sample_id!r} fingerprint={fp[:12]}"
                )
        return ModelResponse(text=text, finish_reason=FinishReason.STOP, latency_ms=0.0)


# One append lock per cache file so several ReplayBackend instances in the
# same process (one per pipeline phase) never interleave partial lines.
_REPLAY_LOCKS: dict[str, threading.Lock] = {}
_REPLAY_LOCKS_GUARD = threading.Lock()


def _replay_lock(path: Path) -> threading.Lock:
    key = str(path.resolve())
    with _REPLAY_LOCKS_GUARD:
        return _REPLAY_LOCKS.setdefault(key, threading.Lock())


class ReplayBackend:
    """Append-only JSONL response cache keyed by request fingerprint.

    Cache lines hold {fingerprint, response_text, model_id, timestamp}.
    On duplicate fingerprints the last line wins. Hits never touch the
    inner backend and report latency 0.0 with from_cache set.
    """

    def __init__(self, inner: Backend, cache_path):
        self.inner = inner
        self.cache_path = Path(cache_path)
        self._lock = _replay_lock(self.cache_path)
        self._entries: dict[str, str] = {}
        if self.cache_path.exists():
            with open(self.cache_path, "r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        obj = json.loads(line)
                        self._entries[obj["fingerprint"]] = obj["response_text"]
                    except (json.JSONDecodeError, KeyError, TypeError) as exc:
                        raise ValueError(
                            f"corrupt replay cache {self.cache_path} line {line_no}: {exc}"
                        ) from exc

    def complete(self, request: ModelRequest) -> ModelResponse:
        fp = request_fingerprint(request)
        with self._lock:
            cached = self._entries.get(fp)
        if cached is not None:
            return ModelResponse(
                text=cached,
                finish_reason=FinishReason.STOP,
                latency_ms=0.0,
                from_cache=True,
            )
        response = self.inner.complete(request)
        record = {
            "fingerprint": fp,
            "response_text": response.text,
            "model_id": request.model_id,
            "timestamp": time.time(),
        }
        with self._lock:
            self._entries[fp] = response.text
            with open(self.cache_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        return response


@dataclass(frozen=True)
class CallRecord:
    phase: str
    fingerprint: str
    from_cache: bool
    latency_ms: float


class RecordingBackend:
    """Wraps a backend, appending a CallRecord per completed call."""

    def __init__(self, inner: Backend, phase: str, records: list[CallRecord]):
        self.inner = inner
        self.phase = phase
        self.records = records

    def complete(self, request: ModelRequest) -> ModelResponse:
        response = self.inner.complete(request)
        self.records.append(
            CallRecord(
                phase=self.phase,
                fingerprint=request_fingerprint(request),
                from_cache=response.from_cache,
                latency_ms=response.latency_ms,
            )
        )
        return response
