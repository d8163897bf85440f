"""Model backends: HTTP chat-completions, recorded replay, and scripted.

`send` is the single entry point the orchestrator uses. It applies the
shared rate limiter, retries throttled requests with exponential backoff
(base 2 s, factor 2, at most 5 attempts, honoring server retry-after),
and guarantees the returned turn is an ASSISTANT turn.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Pattern, Protocol, Sequence

import requests

from .chat import ChatTurn, Role, SessionTranscript, ToolInvocation, ToolSpec, turn_to_dict
from .errors import (
    BackendUnreachableError,
    MalformedResponseError,
    NoRuleMatchedError,
    RateLimitedError,
    RateLimitedExhaustedError,
    TranscriptExhaustedError,
)

BACKOFF_BASE_SECONDS = 2.0
BACKOFF_FACTOR = 2.0
MAX_SEND_ATTEMPTS = 5
DEFAULT_RATE_BUDGET = 10  # requests per minute, free-tier flavored


def assistant_turn(content: str, tool_calls: Sequence[ToolInvocation] = ()) -> ChatTurn:
    return ChatTurn(role=Role.ASSISTANT, content=content, tool_calls=tuple(tool_calls))


class RateLimiter:
    """Sliding-window limiter: at most `budget` dispatches per 60 seconds.

    Clock and sleep are injectable so tests can drive a virtual clock.
    Safe for concurrent use.
    """

    def __init__(
        self,
        budget_per_minute: int = DEFAULT_RATE_BUDGET,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if budget_per_minute < 1:
            raise ValueError("rate budget must be positive")
        self.budget = budget_per_minute
        self._clock = clock
        self._sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        """Block until a dispatch slot is free; returns the dispatch time."""
        while True:
            with self._lock:
                now = self._clock()
                while self._stamps and self._stamps[0] < now - 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.budget:
                    self._stamps.append(now)
                    return now
                wait = self._stamps[0] + 60.0 - now
            self._sleep(max(wait, 0.001))


@dataclass
class SendStats:
    requests: int = 0
    retries: int = 0


class Backend(Protocol):
    backend_id: str

    def complete(self, turns: Sequence[ChatTurn], tools: Sequence[ToolSpec]) -> ChatTurn:
        ...


def send(
    transcript: SessionTranscript,
    tools: Sequence[ToolSpec],
    backend: Backend,
    *,
    rate_limiter: RateLimiter | None = None,
    stats: SendStats | None = None,
    sleep: Callable[[float], None] = time.sleep,
    wire_turns: Sequence[ChatTurn] | None = None,
) -> ChatTurn:
    """One request/response round-trip with throttle retries.

    `wire_turns` optionally overrides the turn view sent on the wire
    (e.g. a compacted view); the transcript itself is never modified here.
    """
    turns = list(wire_turns) if wire_turns is not None else list(transcript.turns)
    backoff = BACKOFF_BASE_SECONDS
    for attempt in range(1, MAX_SEND_ATTEMPTS + 1):
        if rate_limiter is not None:
            rate_limiter.acquire()
        if stats is not None:
            stats.requests += 1
        try:
            reply = backend.complete(turns, tools)
        except RateLimitedError as exc:
            if stats is not None:
                stats.retries += 1
            if attempt == MAX_SEND_ATTEMPTS:
                raise RateLimitedExhaustedError(
                    f"backend still throttling after {MAX_SEND_ATTEMPTS} attempts"
                ) from exc
            delay = exc.retry_after if exc.retry_after is not None else backoff
            sleep(max(float(delay), 0.0))
            backoff *= BACKOFF_FACTOR
            continue
        if reply.role is not Role.ASSISTANT:
            raise MalformedResponseError(
                f"backend returned a {reply.role.value} turn, expected ASSISTANT"
            )
        return reply
    raise RateLimitedExhaustedError("unreachable")  # pragma: no cover


# ---------------------------------------------------------------------------
# HTTP chat-completions backend


class HttpBackend:
    """OpenAI-style chat-completions client.

    Credentials come only from the environment (`api_key_env`), never
    from configuration files.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "FUZZSMITH_API_KEY",
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._session = session or requests.Session()
        self.backend_id = f"http:{model}"

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    @staticmethod
    def _wire_message(turn: ChatTurn) -> dict:
        if turn.role is Role.TOOL_RESULT:
            return {
                "role": "tool",
                "tool_call_id": turn.tool_call_id,
                "content": turn.content,
            }
        message: dict = {"role": turn.role.value.lower(), "content": turn.content}
        if turn.tool_calls:
            message["tool_calls"] = [
                {
                    "id": call.id,
                    "type": "function",
                    "function": {
                        "name": call.tool_name,
                        "arguments": json.dumps(dict(call.arguments)),
                    },
                }
                for call in turn.tool_calls
            ]
        return message

    @staticmethod
    def _wire_tool(tool: ToolSpec) -> dict:
        properties = {
            p.name: {"type": p.type_hint, "description": p.name}
            for p in tool.parameters
        }
        required = [p.name for p in tool.parameters if p.required]
        return {
            "type": "function",
            "function": {
                "name": tool.name,
                "description": tool.description,
                "parameters": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                },
            },
        }

    def complete(self, turns: Sequence[ChatTurn], tools: Sequence[ToolSpec]) -> ChatTurn:
        payload: dict = {
            "model": self.model,
            "messages": [self._wire_message(t) for t in turns],
        }
        if tools:
            payload["tools"] = [self._wire_tool(t) for t in tools]
        try:
            response = self._session.post(
                self.endpoint, json=payload, headers=self._headers(),
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendUnreachableError(f"{self.endpoint}: {exc}") from exc
        if response.status_code == 429:
            retry_after = None
            header = response.headers.get("Retry-After")
            if header is not None:
                try:
                    retry_after = float(header)
                except ValueError:
                    retry_after = None
            raise RateLimitedError("backend throttled the request",
                                   retry_after=retry_after)
        if response.status_code >= 500:
            raise BackendUnreachableError(
                f"{self.endpoint}: server error {response.status_code}"
            )
        if response.status_code != 200:
            raise MalformedResponseError(
                f"{self.endpoint}: unexpected status {response.status_code}: "
                f"{response.text[:300]}"
            )
        try:
            body = response.json()
            message = body["choices"][0]["message"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"unparseable completion body: {exc}") from exc
        return self._parse_message(message)

    @staticmethod
    def _parse_message(message: dict) -> ChatTurn:
        calls = []
        for raw in message.get("tool_calls") or ():
            try:
                fn = raw["function"]
                args_raw = fn.get("arguments", "{}")
                args = json.loads(args_raw) if isinstance(args_raw, str) else args_raw
                if not isinstance(args, dict):
                    raise TypeError("arguments must be an object")
                calls.append(
                    ToolInvocation(
                        id=str(raw.get("id", f"call_{len(calls)}")),
                        tool_name=str(fn["name"]),
                        arguments={str(k): str(v) for k, v in args.items()},
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedResponseError(f"bad tool_call in response: {exc}") from exc
        return assistant_turn(str(message.get("content") or ""), calls)


# ---------------------------------------------------------------------------
# Replay backend


class ReplayBackend:
    """Re-emits the ASSISTANT turns of a recorded session, in order."""

    def __init__(self, turns: Sequence[ChatTurn], backend_id: str = "replay"):
        self._queue = deque(t for t in turns if t.role is Role.ASSISTANT)
        self.backend_id = backend_id
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "ReplayBackend":
        from .chat import load_transcript

        return cls(load_transcript(path))

    def complete(self, turns: Sequence[ChatTurn], tools: Sequence[ToolSpec]) -> ChatTurn:
        with self._lock:
            if not self._queue:
                raise TranscriptExhaustedError(
                    "recorded transcript has no further ASSISTANT turns"
                )
            return self._queue.popleft()

    def remaining(self) -> int:
        with self._lock:
            return len(self._queue)


# ---------------------------------------------------------------------------
# Scripted backend


Responder = Callable[[Sequence[ChatTurn]], ChatTurn | str]


@dataclass
class ScriptRule:
    """First-match rule: substring or compiled-pattern matcher → response."""

    matcher: str | Pattern
    response: ChatTurn | str | Responder
    once: bool = False
    consumed: bool = field(default=False, init=False)

    def matches(self, prompt: str) -> bool:
        if self.consumed:
            return False
        if isinstance(self.matcher, str):
            return self.matcher in prompt
        return bool(self.matcher.search(prompt))


class ScriptedBackend:
    """Deterministic test double driven by an ordered rule list."""

    def __init__(self, rules: Sequence[ScriptRule], backend_id: str = "scripted"):
        if not rules:
            raise ValueError("scripted backend needs at least one rule")
        self.rules = list(rules)
        self.backend_id = backend_id
        self._lock = threading.Lock()

    def complete(self, turns: Sequence[ChatTurn], tools: Sequence[ToolSpec]) -> ChatTurn:
        prompt = ""
        for turn in reversed(turns):
            if turn.role in (Role.USER, Role.TOOL_RESULT):
                prompt = turn.content
                break
        with self._lock:
            for rule in self.rules:
                if rule.matches(prompt):
                    if rule.once:
                        rule.consumed = True
                    return self._render(rule.response, turns)
        raise NoRuleMatchedError(
            f"no scripted rule matches prompt: {prompt[:120]!r}"
        )

    @staticmethod
    def _render(response: ChatTurn | str | Responder, turns: Sequence[ChatTurn]) -> ChatTurn:
        if callable(response):
            response = response(turns)
        if isinstance(response, str):
            return assistant_turn(response)
        if response.role is not Role.ASSISTANT:
            raise MalformedResponseError("scripted responses must be ASSISTANT turns")
        return response


def compile_pattern(pattern: str) -> Pattern:
    return re.compile(pattern)


def debug_dump_turns(turns: Sequence[ChatTurn]) -> str:
    return json.dumps([turn_to_dict(t) for t in turns], indent=2)
