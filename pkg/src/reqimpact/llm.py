"""Chat-completion access and parsers for the two model output formats.

Backends are pluggable: an HTTP backend speaking the de-facto
chat-completions wire format, and a ReplayStore that serves canned responses
from a directory of digest-named text files. The replay store makes every
pipeline run reproducible offline; in strict-replay mode a missing digest is
an error, never a live call.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

DEFAULT_TEMPERATURE = 0.0
DEFAULT_SEED = 16
DEFAULT_MODEL = "llama3-405b"


class BackendError(RuntimeError):
    """A chat backend failed; ``transient`` says whether a retry may help."""

    def __init__(self, message: str, transient: bool = False):
        super().__init__(message)
        self.transient = transient


class ReplayMissError(BackendError):
    """Strict replay found no stored response for the request digest."""

    def __init__(self, digest: str):
        super().__init__(f"no replayed response for digest {digest}", transient=False)
        self.digest = digest


class RankingParseError(ValueError):
    """The ranking response contains no Sorted_List line."""


@dataclass(frozen=True)
class ChatParams:
    temperature: float = DEFAULT_TEMPERATURE
    seed: int = DEFAULT_SEED
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0


@dataclass(frozen=True)
class ChatRequest:
    prompt: str
    model: str = DEFAULT_MODEL
    params: ChatParams = field(default_factory=ChatParams)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    latency_s: float = 0.0
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


def request_digest(request: ChatRequest) -> str:
    """Stable digest over model, sampling params, and prompt bytes."""
    payload = json.dumps(
        {
            "model": request.model,
            "temperature": request.params.temperature,
            "seed": request.params.seed,
            "frequency_penalty": request.params.frequency_penalty,
            "presence_penalty": request.params.presence_penalty,
            "prompt": request.prompt,
        },
        ensure_ascii=False,
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class HttpChatBackend:
    """POSTs chat-completion requests; credential comes from an env var."""

    def __init__(
        self,
        endpoint: str,
        credential_env: str = "CHAT_API_KEY",
        timeout_s: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.credential_env = credential_env
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def send(self, request: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        credential = os.environ.get(self.credential_env, "")
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        body = {
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.params.temperature,
            "seed": request.params.seed,
            "frequency_penalty": request.params.frequency_penalty,
            "presence_penalty": request.params.presence_penalty,
        }
        started = time.monotonic()
        try:
            resp = self.session.post(
                self.endpoint, json=body, headers=headers, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise BackendError(f"transport failure: {exc}", transient=True) from exc
        latency = time.monotonic() - started
        if resp.status_code == 429 or resp.status_code >= 500:
            raise BackendError(
                f"backend returned {resp.status_code}", transient=True
            )
        if resp.status_code != 200:
            raise BackendError(
                f"backend returned {resp.status_code}: {resp.text[:200]}",
                transient=False,
            )
        try:
            doc = resp.json()
            text = doc["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed backend response: {exc}", transient=False)
        usage = doc.get("usage") or {}
        return ChatResponse(
            text=text,
            latency_s=latency,
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
        )


class ReplayStore:
    """Directory-backed response store keyed by request digest.

    Modes: ``record`` forwards to the live backend and persists the reply;
    ``replay`` serves stored replies and falls through to the live backend
    on a miss; ``strict-replay`` serves stored replies only.
    """

    MODES = ("record", "replay", "strict-replay")

    def __init__(self, directory, mode: str = "strict-replay", live=None):
        if mode not in self.MODES:
            raise ValueError(f"unknown replay mode {mode!r}")
        if mode == "record" and live is None:
            raise ValueError("record mode needs a live backend")
        self.directory = Path(directory)
        self.mode = mode
        self.live = live
        self._write_lock = threading.Lock()
        if mode == "record":
            self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.directory / f"{digest}.txt"

    def send(self, request: ChatRequest) -> ChatResponse:
        digest = request_digest(request)
        path = self._path(digest)
        if self.mode != "record" and path.is_file():
            return ChatResponse(text=path.read_text("utf-8"))
        if self.mode == "strict-replay":
            raise ReplayMissError(digest)
        if self.live is None:
            raise ReplayMissError(digest)
        response = self.live.send(request)
        if self.mode == "record":
            with self._write_lock:
                path.write_text(response.text, encoding="utf-8")
        return response


def complete(
    request: ChatRequest,
    backend,
    max_attempts: int = 3,
    backoff_base_s: float = 1.0,
    sleep=time.sleep,
) -> ChatResponse:
    """Send a chat request, retrying transient failures with backoff."""
    attempt = 0
    while True:
        attempt += 1
        try:
            return backend.send(request)
        except BackendError as exc:
            if not exc.transient or attempt >= max_attempts:
                raise
            sleep(backoff_base_s * 2 ** (attempt - 1))


# Lines like "impacted ReqID: R2,justification: <text>"; the separator
# between the id and "justification" may be a comma, comma+space, or spaces.
_IMPACT_LINE = re.compile(
    r"impacted\s+ReqID\s*:\s*(?P<id>[^,:\s]+)\s*[,]?\s*justification\s*:\s*(?P<just>.*)",
    re.IGNORECASE,
)

_SORTED_LIST = re.compile(r"Sorted_?List\s*:\s*(?P<ids>.*)", re.IGNORECASE)


def parse_impact_output(
    text: str, known_ids
) -> tuple[list[tuple[str, str]], list[str]]:
    """Extract (requirement id, justification) pairs from model output.

    Model text is untrusted, so nothing here is fatal: lines that do not
    match the directive pattern are ignored, ids outside ``known_ids`` are
    dropped with a warning, and duplicate ids keep their first occurrence.
    """
    known = set(known_ids)
    results: list[tuple[str, str]] = []
    seen: set[str] = set()
    warnings: list[str] = []
    for line in text.splitlines():
        match = _IMPACT_LINE.search(line)
        if not match:
            continue
        req_id = match.group("id").strip()
        justification = match.group("just").strip()
        if req_id not in known:
            warnings.append(f"dropped unknown requirement id {req_id!r}")
            continue
        if req_id in seen:
            continue
        seen.add(req_id)
        results.append((req_id, justification))
    return results, warnings


def parse_ranking_output(text: str, expected_ids) -> tuple[list[str], list[str]]:
    """Extract a ranked permutation of ``expected_ids`` from model output.

    Takes the last Sorted_List line, drops unknown ids (warning), and
    appends any missing expected ids at the tail in their original candidate
    order (warning), so the result is always a permutation of
    ``expected_ids``. Raises RankingParseError when no Sorted_List line
    exists.
    """
    expected = list(expected_ids)
    expected_set = set(expected)
    last_match = None
    for line in text.splitlines():
        match = _SORTED_LIST.search(line)
        if match:
            last_match = match
    if last_match is None:
        raise RankingParseError("no Sorted_List line in ranking output")
    ranked: list[str] = []
    warnings: list[str] = []
    for token in re.split(r"[,\s]+", last_match.group("ids").strip()):
        if not token:
            continue
        if token not in expected_set:
            warnings.append(f"dropped unknown ranked id {token!r}")
            continue
        if token in ranked:
            continue
        ranked.append(token)
    missing = [rid for rid in expected if rid not in ranked]
    if missing:
        warnings.append(f"ranking omitted {len(missing)} id(s); appended in input order")
        ranked.extend(missing)
    return ranked, warnings
