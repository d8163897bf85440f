"""Typed message protocol between the orchestrator and model backends.

A SessionTranscript is an append-only sequence of ChatTurns starting
with exactly one SYSTEM turn. Tool calls issued by ASSISTANT turns are
correlated to TOOL_RESULT turns by id. Transcripts serialize to a
versioned JSON-lines file that the replay backend can re-drive to
reproduce a session byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .errors import IoFailureError, TranscriptInvariantError, TranscriptMissingError

TRANSCRIPT_SCHEMA = "fuzzsmith-transcript"
TRANSCRIPT_VERSION = 1


class Role(Enum):
    SYSTEM = "SYSTEM"
    USER = "USER"
    ASSISTANT = "ASSISTANT"
    TOOL_RESULT = "TOOL_RESULT"


@dataclass(frozen=True)
class ToolInvocation:
    id: str
    tool_name: str
    arguments: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ToolParam:
    name: str
    type_hint: str
    required: bool = True


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    parameters: tuple[ToolParam, ...] = ()


@dataclass(frozen=True)
class ChatTurn:
    role: Role
    content: str
    tool_calls: tuple[ToolInvocation, ...] = ()
    tool_call_id: str | None = None

    def __post_init__(self):
        if self.tool_calls and self.role is not Role.ASSISTANT:
            raise TranscriptInvariantError(
                f"tool_calls are only valid on ASSISTANT turns, not {self.role.value}"
            )
        if self.tool_call_id is not None and self.role is not Role.TOOL_RESULT:
            raise TranscriptInvariantError(
                f"tool_call_id is only valid on TOOL_RESULT turns, not {self.role.value}"
            )


def estimate_tokens(turn: ChatTurn) -> int:
    """Crude chars/4 token estimate, floored at 1 per turn."""
    chars = len(turn.content)
    for call in turn.tool_calls:
        chars += len(call.tool_name) + sum(
            len(k) + len(v) for k, v in call.arguments.items()
        )
    return max(1, chars // 4)


class SessionTranscript:
    """Append-only conversation history with a running token estimate."""

    def __init__(self, backend_id: str):
        self.backend_id = backend_id
        self._turns: list[ChatTurn] = []
        self._issued_ids: set[str] = set()
        self.token_estimate = 0

    @property
    def turns(self) -> tuple[ChatTurn, ...]:
        return tuple(self._turns)

    def __len__(self) -> int:
        return len(self._turns)

    def append(self, turn: ChatTurn) -> None:
        if not self._turns:
            if turn.role is not Role.SYSTEM:
                raise TranscriptInvariantError(
                    "a transcript must begin with a SYSTEM turn"
                )
        elif turn.role is Role.SYSTEM:
            raise TranscriptInvariantError("only one SYSTEM turn is allowed")
        if turn.role is Role.TOOL_RESULT:
            if turn.tool_call_id is None:
                raise TranscriptInvariantError("TOOL_RESULT turns need a tool_call_id")
            if turn.tool_call_id not in self._issued_ids:
                raise TranscriptInvariantError(
                    f"tool_call_id {turn.tool_call_id!r} matches no prior "
                    "ASSISTANT tool call"
                )
        self._turns.append(turn)
        for call in turn.tool_calls:
            self._issued_ids.add(call.id)
        self.token_estimate += estimate_tokens(turn)

    def latest_prompt_content(self) -> str:
        """Content of the most recent USER or TOOL_RESULT turn, if any."""
        for turn in reversed(self._turns):
            if turn.role in (Role.USER, Role.TOOL_RESULT):
                return turn.content
        return ""

    def assistant_turns(self) -> list[ChatTurn]:
        return [t for t in self._turns if t.role is Role.ASSISTANT]


def compact_for_send(
    transcript: SessionTranscript, token_ceiling: int
) -> list[ChatTurn]:
    """Wire view of a transcript, summarizing old turns past a ceiling.

    The transcript itself is never mutated: when the estimate exceeds the
    ceiling, the oldest non-SYSTEM turns are folded into one USER recap
    turn and only the most recent turns are sent verbatim.
    """
    turns = list(transcript.turns)
    if transcript.token_estimate <= token_ceiling or len(turns) <= 3:
        return turns
    head, rest = turns[0], turns[1:]
    kept: list[ChatTurn] = []
    budget = max(1, token_ceiling // 2)
    used = 0
    for turn in reversed(rest):
        used += estimate_tokens(turn)
        if used > budget and kept:
            break
        kept.append(turn)
    kept.reverse()
    folded = rest[: len(rest) - len(kept)]
    if not folded:
        return turns
    lines = ["Recap of earlier turns in this session:"]
    for turn in folded:
        snippet = turn.content.replace("\n", " ")[:200]
        calls = "".join(f" [tool:{c.tool_name}]" for c in turn.tool_calls)
        lines.append(f"- {turn.role.value}:{calls} {snippet}")
    recap = ChatTurn(role=Role.USER, content="\n".join(lines))
    # A TOOL_RESULT cannot open the kept tail without its ASSISTANT issuer.
    while kept and kept[0].role is Role.TOOL_RESULT:
        kept.pop(0)
    return [head, recap, *kept]


def turn_to_dict(turn: ChatTurn) -> dict:
    record: dict = {"role": turn.role.value, "content": turn.content}
    if turn.tool_calls:
        record["tool_calls"] = [
            {"id": c.id, "tool_name": c.tool_name, "arguments": dict(c.arguments)}
            for c in turn.tool_calls
        ]
    if turn.tool_call_id is not None:
        record["tool_call_id"] = turn.tool_call_id
    return record


def turn_from_dict(record: Mapping) -> ChatTurn:
    calls = tuple(
        ToolInvocation(
            id=str(c["id"]),
            tool_name=str(c["tool_name"]),
            arguments={str(k): str(v) for k, v in c.get("arguments", {}).items()},
        )
        for c in record.get("tool_calls", ())
    )
    return ChatTurn(
        role=Role(record["role"]),
        content=str(record.get("content", "")),
        tool_calls=calls,
        tool_call_id=record.get("tool_call_id"),
    )


def record_transcript(transcript: SessionTranscript, sink: str | Path) -> Path:
    """Serialize a transcript as one self-contained JSON-lines file."""
    path = Path(sink)
    header = {
        "schema": TRANSCRIPT_SCHEMA,
        "version": TRANSCRIPT_VERSION,
        "backend_id": transcript.backend_id,
    }
    lines = [json.dumps(header)]
    lines.extend(json.dumps(turn_to_dict(t)) for t in transcript.turns)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot write transcript to {path}: {exc}") from exc
    return path


def load_transcript(path: str | Path) -> list[ChatTurn]:
    """Load the turn sequence of a recorded transcript file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise TranscriptMissingError(f"no transcript at {path}") from exc
    except OSError as exc:
        raise IoFailureError(f"cannot read transcript {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TranscriptInvariantError(f"{path}: empty transcript file")
    header = json.loads(lines[0])
    if header.get("schema") != TRANSCRIPT_SCHEMA:
        raise TranscriptInvariantError(f"{path}: not a transcript file")
    return [turn_from_dict(json.loads(ln)) for ln in lines[1:]]


def iter_assistant_turns(turns: Iterable[ChatTurn]) -> list[ChatTurn]:
    return [t for t in turns if t.role is Role.ASSISTANT]
