"""Querying VLM backends, with a content-addressed transcript cache.

``http_chat`` talks JSON over HTTP to a chat-completion style endpoint. The
three mock kinds never touch the network: ``mock_oracle`` always answers the
ground-truth plan, ``mock_noisy`` corrupts it with a fixed probability, and
``mock_scripted`` replays canned responses from a file.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import random
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping

import httpx

from .grammar import Action, Plan, parse_connectivity_claim, serialize_plan
from .graph import ConnectivityGraph, NavTask, oracle_plan
from .prompts import RenderedPrompt

log = logging.getLogger(__name__)

KINDS = ("http_chat", "mock_oracle", "mock_scripted", "mock_noisy")
ADAPTERS = ("content_parts", "image_blocks")
CORRUPTIONS = ("drop", "swap", "undefined_verb")
UNDEFINED_VERBS = ("PassThrough", "EnterRoom", "WalkTo")

ERROR_KINDS = ("auth", "timeout", "non_json", "bad_response", "http_error", "unavailable", "replay_miss", "config")


class BackendConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock_oracle"
    endpoint: str | None = None
    model: str = ""
    credential_env: str | None = None
    adapter: str = "content_parts"
    temperature: float = 0.0
    max_tokens: int = 1024
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    seed: int | None = 0
    p_error: float = 0.0
    script_path: str | None = None
    max_in_flight: int = 4
    rate_per_sec: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BackendConfigError(f"unknown backend kind {self.kind!r}")
        if self.adapter not in ADAPTERS:
            raise BackendConfigError(f"unknown adapter {self.adapter!r}")
        if self.kind == "http_chat" and (not self.endpoint or not self.credential_env):
            raise BackendConfigError("http_chat needs an endpoint and a credential environment variable")
        if self.kind in ("mock_oracle", "mock_noisy") and self.seed is None:
            raise BackendConfigError(f"{self.kind} needs a seed")
        if self.kind == "mock_scripted" and not self.script_path:
            raise BackendConfigError("mock_scripted needs a script path")
        if not 0.0 <= self.p_error <= 1.0:
            raise BackendConfigError("p_error must be within [0, 1]")
        if self.max_in_flight < 1 or self.max_retries < 0:
            raise BackendConfigError("max_in_flight >= 1 and max_retries >= 0 required")

    @property
    def identity(self) -> str:
        """Stable description of who answers; part of the cache key."""
        if self.kind == "http_chat":
            return f"http_chat|{self.endpoint}|{self.model}|{self.adapter}|t={self.temperature:g}|max={self.max_tokens}"
        if self.kind == "mock_noisy":
            return f"mock_noisy|seed={self.seed}|p={self.p_error:g}"
        if self.kind == "mock_scripted":
            return f"mock_scripted|{Path(self.script_path).name}"
        return f"mock_oracle|seed={self.seed}"

    @property
    def is_mock(self) -> bool:
        return self.kind != "http_chat"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> BackendConfig:
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise BackendConfigError(f"unknown backend fields {sorted(extra)}")
        return cls(**data)


@dataclass
class Transcript:
    prompt_hash: str
    backend: str
    trial_index: int
    request: dict
    response_text: str | None = None
    plan: str | None = None
    parse_error: str | None = None
    error_kind: str | None = None
    error_detail: str | None = None
    latency_ms: float = 0.0
    timestamp: str = ""
    attempts: int = 0
    cached: bool = False

    @property
    def ok(self) -> bool:
        return self.error_kind is None

    @property
    def key(self) -> str:
        return cache_key(self.prompt_hash, self.backend, self.trial_index)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("cached")
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> Transcript:
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class MockContext:
    """What the mocks need to know to answer: the true graph and the task."""

    graph: ConnectivityGraph
    task: NavTask
    profile: str = "strict"


def cache_key(prompt_hash: str, backend: str, trial_index: int) -> str:
    backend_hash = hashlib.sha256(backend.encode("utf-8")).hexdigest()[:16]
    return f"{prompt_hash}-{backend_hash}-{trial_index}"


class TranscriptCache:
    """One JSON file per (prompt, backend, trial) under ``root``.

    Writes go to a temp file in the target directory and are renamed into
    place, so concurrent writers never expose partial files.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, prompt_hash: str, backend: str, trial_index: int) -> Path:
        key = cache_key(prompt_hash, backend, trial_index)
        return self.root / prompt_hash[:2] / f"{key}.json"

    def get(self, prompt_hash: str, backend: str, trial_index: int) -> Transcript | None:
        p = self.path(prompt_hash, backend, trial_index)
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError):
            log.warning("ignoring unreadable cache entry %s", p)
            return None
        t = Transcript.from_dict(data)
        t.cached = True
        return t

    def put(self, transcript: Transcript) -> Path:
        p = self.path(transcript.prompt_hash, transcript.backend, transcript.trial_index)
        p.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(transcript.to_dict(), fh, ensure_ascii=False, sort_keys=True)
            os.replace(tmp, p)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        return p


class RateLimiter:
    """Token bucket shared by threads; ``rate`` tokens per second."""

    def __init__(self, rate: float | None, burst: int = 1, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = max(1, burst)
        self.tokens = float(self.capacity)
        self.clock, self.sleep = clock, sleep
        self.last = clock()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        if not self.rate:
            return
        while True:
            with self.lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
                self.last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleep(wait)


# ------------------------------------------------------------------ adapters

def build_request(backend: BackendConfig, prompt: RenderedPrompt, include_image_data: bool = True) -> dict:
    """Chat request body with one user message holding text and the image.

    ``content_parts`` puts the image in an ``image_url`` data URL part;
    ``image_blocks`` uses a base64 ``image`` block with a ``source`` object.
    """
    b64 = base64.b64encode(prompt.image).decode("ascii") if include_image_data else f"<sha256:{hashlib.sha256(prompt.image).hexdigest()}>"
    if backend.adapter == "content_parts":
        content = [{"type": "text", "text": prompt.text}]
        if prompt.image:
            content.append({"type": "image_url", "image_url": {"url": f"data:{prompt.image_mime};base64,{b64}"}})
    else:
        content = []
        if prompt.image:
            content.append({"type": "image", "source": {"type": "base64", "media_type": prompt.image_mime, "data": b64}})
        content.append({"type": "text", "text": prompt.text})
    return {
        "model": backend.model,
        "max_tokens": backend.max_tokens,
        "temperature": backend.temperature,
        "messages": [{"role": "user", "content": content}],
    }


def extract_text(adapter: str, body) -> str:
    """Pull the assistant text out of a response body; KeyError if absent."""
    if not isinstance(body, dict):
        raise KeyError("response body is not an object")
    if adapter == "content_parts":
        content = body["choices"][0]["message"]["content"]
        if isinstance(content, list):
            return "".join(p.get("text", "") for p in content if isinstance(p, dict))
        if not isinstance(content, str):
            raise KeyError("message content is not text")
        return content
    parts = body["content"]
    texts = [p["text"] for p in parts if isinstance(p, dict) and p.get("type") == "text"]
    if not texts:
        raise KeyError("no text block in response")
    return "".join(texts)


def _scrub(text: str | None, secret: str | None) -> str | None:
    if text is None or not secret:
        return text
    return text.replace(secret, "***")


# --------------------------------------------------------------------- mocks

def _trial_rng(seed, task: NavTask, trial_index: int) -> random.Random:
    return random.Random(f"{seed}|{task.map_id}|{task.start_room}|{task.goal_room}|{trial_index}")


def _wrap_response(plan_json: str, graph: ConnectivityGraph) -> str:
    lines = [f"{d}: {graph.display_name(a)} <-> {graph.display_name(b)}" for d, a, b in graph.edges]
    return "Door connections:\n" + "\n".join(lines) + "\n\nFinal plan:\n" + plan_json


def mock_oracle_respond(task: NavTask, graph: ConnectivityGraph) -> str:
    return _wrap_response(serialize_plan(oracle_plan(graph, task)), graph)


def corrupt_plan(plan: Plan, task: NavTask, graph: ConnectivityGraph, corruption: str,
                 rng: random.Random) -> tuple[Plan, str]:
    """Apply one corruption; returns the plan and the corruption actually used."""
    actions = list(plan.actions)
    start = graph.require_room(task.start_room)
    if corruption == "swap":
        touching = {d for d, _ in graph.neighbors(start)}
        far = [d for d in graph.door_ids if d not in touching]
        if far and actions:
            wrong = rng.choice(far)
            first = actions[0].target
            actions = [Action(a.verb, wrong) if a.target == first and i < 3 else a for i, a in enumerate(actions)]
            return Plan(tuple(actions), plan.profile), "swap"
        corruption = "drop"
    if corruption == "undefined_verb" and actions:
        i = rng.randrange(len(actions))
        actions[i] = Action(rng.choice(UNDEFINED_VERBS), actions[i].target)
        return Plan(tuple(actions), plan.profile), "undefined_verb"
    # drop the last door triple: the cursor stops one room short
    return Plan(tuple(actions[:-3]), plan.profile), "drop"


def mock_noisy_respond(task: NavTask, graph: ConnectivityGraph, seed, p_error: float, trial_index: int = 0,
                       corruption: str | None = None) -> str:
    """Oracle plan with probability 1 - p_error, else one uniformly chosen corruption.

    Deterministic in (seed, task, trial_index). ``corruption`` forces the
    corruption kind whenever one is applied.
    """
    rng = _trial_rng(seed, task, trial_index)
    plan = oracle_plan(graph, task)
    if rng.random() < p_error:
        kind = rng.choice(CORRUPTIONS)
        plan, _ = corrupt_plan(plan, task, graph, corruption or kind, rng)
    return _wrap_response(serialize_plan(plan), graph)


def _scripted_responses(path: str) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not isinstance(data, list) or not data:
        raise BackendConfigError(f"script {path} must hold a non-empty JSON list of responses")
    return [d if isinstance(d, str) else json.dumps(d) for d in data]


def mock_respond(backend: BackendConfig, context: MockContext | None, trial_index: int) -> str:
    if backend.kind == "mock_scripted":
        responses = _scripted_responses(backend.script_path)
        return responses[trial_index % len(responses)]
    if context is None:
        raise BackendConfigError(f"{backend.kind} needs a MockContext (graph and task)")
    if backend.kind == "mock_oracle":
        return mock_oracle_respond(context.task, context.graph)
    return mock_noisy_respond(context.task, context.graph, backend.seed, backend.p_error, trial_index)


# --------------------------------------------------------------------- query

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _http_call(backend: BackendConfig, prompt: RenderedPrompt, transcript: Transcript, secret: str,
               transport: httpx.BaseTransport | None, sleep: Callable[[float], None]) -> None:
    body = build_request(backend, prompt)
    headers = {"Authorization": f"Bearer {secret}", "Content-Type": "application/json"}
    last_kind, last_detail = "unavailable", "no attempt made"
    with httpx.Client(transport=transport, timeout=backend.timeout) as client:
        for attempt in range(backend.max_retries + 1):
            transcript.attempts = attempt + 1
            if attempt:
                sleep(backend.backoff_base * (2 ** (attempt - 1)))
            try:
                resp = client.post(backend.endpoint, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last_kind, last_detail = "timeout", f"timed out after {backend.timeout:g}s: {exc}"
                continue
            except httpx.TransportError as exc:
                last_kind, last_detail = "unavailable", f"transport error: {exc}"
                continue
            if resp.status_code in (401, 403):
                transcript.error_kind, transcript.error_detail = "auth", f"HTTP {resp.status_code}"
                return
            if resp.status_code == 429 or resp.status_code >= 500:
                last_kind, last_detail = "unavailable", f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                transcript.error_kind = "http_error"
                transcript.error_detail = f"HTTP {resp.status_code}: {resp.text[:200]}"
                return
            try:
                payload = resp.json()
            except (json.JSONDecodeError, UnicodeDecodeError):
                transcript.error_kind, transcript.error_detail = "non_json", f"response is not JSON: {resp.text[:200]!r}"
                return
            try:
                transcript.response_text = extract_text(backend.adapter, payload)
            except (KeyError, IndexError, TypeError) as exc:
                transcript.error_kind, transcript.error_detail = "bad_response", f"no assistant text: {exc}"
                return
            return
    transcript.error_kind, transcript.error_detail = last_kind, f"{last_detail} (after {transcript.attempts} attempts)"


def query(backend: BackendConfig, prompt: RenderedPrompt, trial_index: int = 0, *,
          context: MockContext | None = None, cache: TranscriptCache | None = None, replay: bool = False,
          transport: httpx.BaseTransport | None = None, env: Mapping[str, str] | None = None,
          sleep: Callable[[float], None] = time.sleep, limiter: RateLimiter | None = None) -> Transcript:
    """One trial. Failures come back as a Transcript with ``error_kind`` set.

    With ``replay`` only the cache is consulted; a miss is an error and no
    request is sent.
    """
    if cache is not None:
        hit = cache.get(prompt.prompt_hash, backend.identity, trial_index)
        if hit is not None:
            return hit
    transcript = Transcript(
        prompt_hash=prompt.prompt_hash,
        backend=backend.identity,
        trial_index=trial_index,
        request=build_request(backend, prompt, include_image_data=False),
        timestamp=_now(),
    )
    if replay:
        transcript.error_kind, transcript.error_detail = "replay_miss", "no cached transcript and replay forbids queries"
        return transcript

    secret = None
    t0 = time.perf_counter()
    if backend.kind == "http_chat":
        env = os.environ if env is None else env
        secret = env.get(backend.credential_env or "")
        if not secret:
            transcript.error_kind = "auth"
            transcript.error_detail = f"credential variable {backend.credential_env} is not set"
            return transcript
        if limiter is not None:
            limiter.acquire()
        _http_call(backend, prompt, transcript, secret, transport, sleep)
    else:
        transcript.attempts = 1
        transcript.response_text = mock_respond(backend, context, trial_index)
    transcript.latency_ms = round((time.perf_counter() - t0) * 1000.0, 3)
    transcript.response_text = _scrub(transcript.response_text, secret)
    transcript.error_detail = _scrub(transcript.error_detail, secret)

    if transcript.ok:
        from .grammar import PlanParseError, parse_plan

        profile = context.profile if context else "strict"
        try:
            transcript.plan = serialize_plan(parse_plan(transcript.response_text, profile))
        except PlanParseError as exc:
            transcript.parse_error = str(exc)
        if cache is not None:
            cache.put(transcript)
    log.debug("trial %s on %s: %s", trial_index, backend.identity, transcript.error_kind or "ok")
    return transcript


@dataclass(frozen=True)
class QueryJob:
    prompt: RenderedPrompt
    trial_index: int
    context: MockContext | None = None


def query_many(backend: BackendConfig, jobs: Iterable[QueryJob], *, cache: TranscriptCache | None = None,
               replay: bool = False, transport: httpx.BaseTransport | None = None,
               env: Mapping[str, str] | None = None) -> Iterable[Transcript]:
    """Run jobs with at most ``backend.max_in_flight`` concurrent requests.

    Results are yielded in job order.
    """
    limiter = RateLimiter(backend.rate_per_sec)
    jobs = list(jobs)
    if backend.is_mock or backend.max_in_flight == 1:
        for job in jobs:
            yield query(backend, job.prompt, job.trial_index, context=job.context, cache=cache, replay=replay,
                        transport=transport, env=env, limiter=limiter)
        return
    with ThreadPoolExecutor(max_workers=backend.max_in_flight) as pool:
        futures = [
            pool.submit(query, backend, job.prompt, job.trial_index, context=job.context, cache=cache,
                        replay=replay, transport=transport, env=env, limiter=limiter)
            for job in jobs
        ]
        for fut in futures:
            yield fut.result()


def connectivity_from_transcript(transcript: Transcript):
    return parse_connectivity_claim(transcript.response_text or "")
