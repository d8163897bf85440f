"""Per-function session state machine and the batch pipeline.

Each fuzzable export gets its own chat session that moves through a
one-way phase machine:

    ANALYSIS ──► GENERATION ──► DONE
        └──────────┴──────────► FAILED

During ANALYSIS the model may call the binary-analysis tools; a reply
with no tool calls (or the analysis budget) advances the phase. During
GENERATION every assistant round-trip is accounted as one driver
attempt: source is extracted, compiled, and smoke-run, with compiler or
runtime evidence fed back verbatim for repair. The first nominal run
finishes the session; exhausting the attempt budget fails it.

Analysis tools requested after the transition are never executed — the
model gets a refusal tool-result and generation continues.
"""

from __future__ import annotations

import logging
import threading
import time
import uuid
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from . import forge
from .backends import Backend, RateLimiter, SendStats, send
from .chat import (
    ChatTurn,
    Role,
    SessionTranscript,
    ToolInvocation,
    ToolParam,
    ToolSpec,
    compact_for_send,
    record_transcript,
)
from .disasm import DisassemblyProvider, render_c_declaration
from .elf import BinaryImage, ExportedFunction, filter_fuzzable, list_exports, load_binary
from .errors import (
    BackendUnreachableError,
    FuzzsmithError,
    MalformedResponseError,
    NoCodeFoundError,
    NoRuleMatchedError,
    PhaseViolationError,
    RateLimitedExhaustedError,
    TranscriptExhaustedError,
    TranscriptMissingError,
    UnknownFunctionError,
)
from .ledger import (
    AttemptRecord,
    CompileSummary,
    CoverageReport,
    ExecSummary,
    LedgerWriter,
    OutcomeRecord,
    RunLedger,
    compute_report,
    load_ledger,
    scrub_workspace,
    utc_now_iso,
)
from .prompts import PromptTemplate, render_prompt

log = logging.getLogger(__name__)

REFUSAL_PREFIX = "refused:"
ANALYSIS_TOOLS = ("get_signature", "get_disassembly")
NO_CODE_FOLLOWUP = (
    "Your previous reply contained no usable fuzz driver. Reply with one "
    "complete C or C++ source file that defines "
    'extern "C" int LLVMFuzzerTestOneInput(const uint8_t *data, size_t size).'
)

DEFAULT_PARALLELISM = 2


class Phase(Enum):
    ANALYSIS = "ANALYSIS"
    GENERATION = "GENERATION"
    DONE = "DONE"
    FAILED = "FAILED"


_ALLOWED_TRANSITIONS = {
    Phase.ANALYSIS: {Phase.GENERATION, Phase.FAILED},
    Phase.GENERATION: {Phase.DONE, Phase.FAILED},
    Phase.DONE: set(),
    Phase.FAILED: set(),
}


class PhaseState:
    """Forward-only phase tracker; illegal transitions raise."""

    def __init__(self):
        self._phase = Phase.ANALYSIS

    @property
    def phase(self) -> Phase:
        return self._phase

    @property
    def terminal(self) -> bool:
        return self._phase in (Phase.DONE, Phase.FAILED)

    def advance(self, to: Phase) -> None:
        if to not in _ALLOWED_TRANSITIONS[self._phase]:
            raise PhaseViolationError(
                f"cannot move from {self._phase.value} to {to.value}"
            )
        self._phase = to


@dataclass(frozen=True)
class Budgets:
    """Hard per-session and per-run resource ceilings."""

    max_analysis_turns: int = 6
    max_generation_attempts: int = 10
    smoke_run_seconds: float = 10.0
    rate_budget_per_minute: int = 10
    compaction_ceiling_tokens: int = 12000


@dataclass
class FunctionSession:
    """Terminal record of one export's drive through the phases."""

    function_name: str
    phase: Phase
    reason: str | None
    analysis_turns_used: int
    generation_attempts_used: int
    attempts: list[AttemptRecord]
    transcript: SessionTranscript
    wall_time: float = 0.0


class ToolRegistry:
    """Binary-analysis tools offered to the model during ANALYSIS."""

    def __init__(self, image: BinaryImage, provider: DisassemblyProvider):
        self._image = image
        self._provider = provider
        self._by_name = {
            e.name: e for e in list_exports(image)
        }

    def specs(self) -> tuple[ToolSpec, ...]:
        param = ToolParam(name="function_name", type_hint="string")
        return (
            ToolSpec(
                name="get_signature",
                description=(
                    "Return the inferred C declaration of an exported function "
                    "of the target library."
                ),
                parameters=(param,),
            ),
            ToolSpec(
                name="get_disassembly",
                description=(
                    "Return the full disassembly listing of an exported function "
                    "of the target library."
                ),
                parameters=(param,),
            ),
        )

    def _resolve(self, arguments) -> ExportedFunction:
        name = str(arguments.get("function_name", "")).strip()
        if not name:
            raise UnknownFunctionError("missing required argument 'function_name'")
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownFunctionError(
                f"{name!r} is not an exported function of this library"
            ) from None

    def execute(self, call: ToolInvocation) -> str:
        """Run one tool call; failures come back as error text, not raises."""
        try:
            if call.tool_name == "get_signature":
                sig = self._provider.infer_signature(self._image, self._resolve(call.arguments))
                return render_c_declaration(sig)
            if call.tool_name == "get_disassembly":
                dis = self._provider.get_disassembly(self._image, self._resolve(call.arguments))
                return dis.text
            return f"error: unknown tool {call.tool_name!r}"
        except FuzzsmithError as exc:
            return f"error: {exc.code}: {exc}"


def refusal_text(tool_name: str, why: str) -> str:
    return f"{REFUSAL_PREFIX} {tool_name} is unavailable — {why}"


def is_refusal(content: str) -> bool:
    return content.startswith(REFUSAL_PREFIX)


def run_function_session(
    image: BinaryImage,
    function: ExportedFunction,
    *,
    provider: DisassemblyProvider,
    backend: Backend,
    workspace: Path,
    library: Path,
    budgets: Budgets = Budgets(),
    compile_config: forge.CompileConfig = forge.CompileConfig(),
    template_dir: str | Path | None = None,
    writer: LedgerWriter | None = None,
    rate_limiter: RateLimiter | None = None,
    stats: SendStats | None = None,
    sleep: Callable[[float], None] = time.sleep,
    transcript_sink: Path | None = None,
) -> FunctionSession:
    """Drive one export from ANALYSIS to DONE or FAILED.

    Every attempt and the terminal outcome are appended to `writer` as
    they happen, so a killed run leaves a loadable partial ledger. The
    full chat transcript is written to `transcript_sink` even when the
    session aborts mid-flight.
    """
    workspace = Path(workspace)
    library = Path(library)
    name = function.name
    state = PhaseState()
    registry = ToolRegistry(image, provider)
    tools = registry.specs()
    backend_id = getattr(backend, "backend_id", type(backend).__name__)
    transcript = SessionTranscript(backend_id=backend_id)
    started = time.monotonic()

    signature = render_c_declaration(provider.infer_signature(image, function))
    compile_preview = forge.build_compile_command(
        compile_config.command_template, Path("driver.cc"), Path("driver.bin"), library
    )

    transcript.append(
        ChatTurn(
            role=Role.SYSTEM,
            content=render_prompt(
                PromptTemplate.SYSTEM, {"library_name": library.name}, template_dir
            ),
        )
    )
    transcript.append(
        ChatTurn(
            role=Role.USER,
            content=render_prompt(
                PromptTemplate.ANALYSIS,
                {"function_name": name, "signature": signature},
                template_dir,
            ),
        )
    )

    analysis_turns = 0
    attempts: list[AttemptRecord] = []
    reason: str | None = None

    def _send() -> ChatTurn:
        wire = compact_for_send(transcript, budgets.compaction_ceiling_tokens)
        offered = tools if state.phase is Phase.ANALYSIS else ()
        reply = send(
            transcript,
            offered,
            backend,
            rate_limiter=rate_limiter,
            stats=stats,
            sleep=sleep,
            wire_turns=wire,
        )
        transcript.append(reply)
        return reply

    def _record(attempt: AttemptRecord) -> None:
        attempts.append(attempt)
        if writer is not None:
            writer.record_attempt(attempt)

    try:
        # --- ANALYSIS ------------------------------------------------------
        reply = _send()
        while reply.tool_calls and analysis_turns < budgets.max_analysis_turns:
            analysis_turns += 1
            for call in reply.tool_calls:
                transcript.append(
                    ChatTurn(
                        role=Role.TOOL_RESULT,
                        content=registry.execute(call),
                        tool_call_id=call.id,
                    )
                )
            reply = _send()
        if reply.tool_calls:
            # Budget spent with calls still pending: refuse and move on.
            for call in reply.tool_calls:
                transcript.append(
                    ChatTurn(
                        role=Role.TOOL_RESULT,
                        content=refusal_text(
                            call.tool_name,
                            "the analysis budget is exhausted; produce the fuzz driver now",
                        ),
                        tool_call_id=call.id,
                    )
                )
        state.advance(Phase.GENERATION)

        # --- GENERATION ----------------------------------------------------
        transcript.append(
            ChatTurn(
                role=Role.USER,
                content=render_prompt(
                    PromptTemplate.GENERATION,
                    {
                        "function_name": name,
                        "signature": signature,
                        "compile_cmd": compile_preview,
                    },
                    template_dir,
                ),
            )
        )

        while len(attempts) < budgets.max_generation_attempts:
            reply = _send()
            attempt_index = len(attempts) + 1

            if reply.tool_calls:
                # Analysis tooling is sealed off once generation starts.
                for call in reply.tool_calls:
                    transcript.append(
                        ChatTurn(
                            role=Role.TOOL_RESULT,
                            content=refusal_text(
                                call.tool_name,
                                "analysis is over; reply with fuzz driver source only",
                            ),
                            tool_call_id=call.id,
                        )
                    )
                _record(
                    AttemptRecord(
                        function_name=name,
                        attempt_index=attempt_index,
                        source_path=None,
                        extracted_from=None,
                        extract_error=(
                            "tool calls refused during generation: "
                            + ", ".join(c.tool_name for c in reply.tool_calls)
                        ),
                        compile=None,
                        exec=None,
                        timestamp=utc_now_iso(),
                    )
                )
                continue

            try:
                source = forge.extract_source(reply.content, name, attempt_index)
            except NoCodeFoundError as exc:
                _record(
                    AttemptRecord(
                        function_name=name,
                        attempt_index=attempt_index,
                        source_path=None,
                        extracted_from=None,
                        extract_error=str(exc),
                        compile=None,
                        exec=None,
                        timestamp=utc_now_iso(),
                    )
                )
                transcript.append(ChatTurn(role=Role.USER, content=NO_CODE_FOLLOWUP))
                continue

            source_path = forge.write_source(source, workspace)
            artifact_path = source_path.parent / "driver.bin"
            compiled = forge.compile_driver(
                source_path, artifact_path, library, compile_config
            )
            (source_path.parent / "compile.stderr").write_text(
                compiled.stderr, encoding="utf-8"
            )
            compile_summary = CompileSummary(
                success=compiled.success,
                stderr=scrub_workspace(compiled.stderr, workspace),
                artifact_path=(
                    str(artifact_path.relative_to(workspace)) if compiled.success else None
                ),
                duration=compiled.duration,
                command=scrub_workspace(compiled.command, workspace),
            )

            if not compiled.success:
                _record(
                    AttemptRecord(
                        function_name=name,
                        attempt_index=attempt_index,
                        source_path=source.path,
                        extracted_from=source.extracted_from.value,
                        extract_error=None,
                        compile=compile_summary,
                        exec=None,
                        timestamp=utc_now_iso(),
                    )
                )
                transcript.append(
                    ChatTurn(
                        role=Role.USER,
                        content=render_prompt(
                            PromptTemplate.COMPILE_REPAIR,
                            {"function_name": name, "stderr": compiled.stderr},
                            template_dir,
                        ),
                    )
                )
                continue

            result = forge.smoke_run(
                artifact_path,
                window=budgets.smoke_run_seconds,
                config=forge.RunConfig(
                    window_seconds=budgets.smoke_run_seconds,
                    library_dir=library.parent,
                ),
            )
            (source_path.parent / "run.log").write_text(
                result.captured_output, encoding="utf-8"
            )
            _record(
                AttemptRecord(
                    function_name=name,
                    attempt_index=attempt_index,
                    source_path=source.path,
                    extracted_from=source.extracted_from.value,
                    extract_error=None,
                    compile=compile_summary,
                    exec=ExecSummary(
                        verdict=result.verdict.value,
                        exit_status=result.exit_status,
                        wall_time=result.wall_time,
                        output=scrub_workspace(result.captured_output, workspace),
                    ),
                    timestamp=utc_now_iso(),
                )
            )

            if result.verdict is forge.Verdict.NOMINAL:
                state.advance(Phase.DONE)
                break

            transcript.append(
                ChatTurn(
                    role=Role.USER,
                    content=render_prompt(
                        PromptTemplate.RUNTIME_REPAIR,
                        {
                            "function_name": name,
                            "verdict": result.verdict.value,
                            "output": result.captured_output,
                        },
                        template_dir,
                    ),
                )
            )

        if not state.terminal:
            reason = "GENERATION_BUDGET_EXHAUSTED"
            state.advance(Phase.FAILED)

    except (NoRuleMatchedError, TranscriptExhaustedError, MalformedResponseError) as exc:
        # Per-session backend faults: this session fails, siblings go on.
        reason = exc.code
        log.warning("session %s failed: %s: %s", name, exc.code, exc)
        if not state.terminal:
            state.advance(Phase.FAILED)
    finally:
        if transcript_sink is not None:
            record_transcript(transcript, transcript_sink)

    wall_time = time.monotonic() - started
    session = FunctionSession(
        function_name=name,
        phase=state.phase,
        reason=reason,
        analysis_turns_used=analysis_turns,
        generation_attempts_used=len(attempts),
        attempts=attempts,
        transcript=transcript,
        wall_time=wall_time,
    )
    if writer is not None:
        writer.record_outcome(
            OutcomeRecord(
                function_name=name,
                state=state.phase.value,
                reason=reason,
                analysis_turns_used=analysis_turns,
                generation_attempts_used=len(attempts),
                wall_time=wall_time,
            )
        )
    return session


# ---------------------------------------------------------------------------
# Batch pipeline


BackendFactory = Callable[[str], Backend]


@dataclass
class PipelineResult:
    ledger: RunLedger
    report: CoverageReport
    sessions: dict[str, FunctionSession]
    exports: list[ExportedFunction]
    backend_error: str | None = None
    stats: SendStats = field(default_factory=SendStats)

    @property
    def full_coverage(self) -> bool:
        return not self.report.vacuous_coverage and self.report.api_coverage_pct == 100.0


def run_pipeline(
    library: str | Path,
    workspace: str | Path,
    *,
    provider: DisassemblyProvider,
    backend: Backend | None = None,
    backend_factory: BackendFactory | None = None,
    budgets: Budgets = Budgets(),
    compile_config: forge.CompileConfig = forge.CompileConfig(),
    template_dir: str | Path | None = None,
    parallelism: int = DEFAULT_PARALLELISM,
    run_id: str | None = None,
    config_snapshot: str = "",
    sleep: Callable[[float], None] = time.sleep,
) -> PipelineResult:
    """Fuzz-drive every fuzzable export of one shared library.

    Sessions run on a bounded worker pool against a shared rate limiter
    and a single ledger writer. An unreachable backend aborts the rest
    of the run; whatever was already appended stays on disk.
    """
    if backend is None and backend_factory is None:
        raise ValueError("run_pipeline needs a backend or a backend_factory")
    library = Path(library)
    workspace = Path(workspace)
    workspace.mkdir(parents=True, exist_ok=True)
    transcripts_dir = workspace / "transcripts"

    image = load_binary(library)
    exports = filter_fuzzable(
        list_exports(image), lambda fn: provider.infer_signature(image, fn)
    )
    fuzzable = [e for e in exports if e.fuzzable]

    limiter = RateLimiter(budgets.rate_budget_per_minute, sleep=sleep)
    stats = SendStats()
    sessions: dict[str, FunctionSession] = {}
    sessions_lock = threading.Lock()
    backend_error: str | None = None

    with LedgerWriter(
        workspace / "run.ldjson",
        library_name=library.name,
        run_id=run_id or uuid.uuid4().hex,
        fuzzable_exports=[e.name for e in fuzzable],
        config_snapshot=config_snapshot,
    ) as writer:

        def _task(function: ExportedFunction) -> None:
            try:
                session_backend = (
                    backend_factory(function.name) if backend_factory is not None else backend
                )
            except TranscriptMissingError as exc:
                log.warning("no recorded transcript for %s: %s", function.name, exc)
                failed = FunctionSession(
                    function_name=function.name,
                    phase=Phase.FAILED,
                    reason=exc.code,
                    analysis_turns_used=0,
                    generation_attempts_used=0,
                    attempts=[],
                    transcript=SessionTranscript(backend_id="missing"),
                )
                writer.record_outcome(
                    OutcomeRecord(
                        function_name=function.name,
                        state=Phase.FAILED.value,
                        reason=exc.code,
                        analysis_turns_used=0,
                        generation_attempts_used=0,
                        wall_time=0.0,
                    )
                )
                with sessions_lock:
                    sessions[function.name] = failed
                return
            session = run_function_session(
                image,
                function,
                provider=provider,
                backend=session_backend,
                workspace=workspace,
                library=library,
                budgets=budgets,
                compile_config=compile_config,
                template_dir=template_dir,
                writer=writer,
                rate_limiter=limiter,
                stats=stats,
                sleep=sleep,
                transcript_sink=transcripts_dir / f"{function.name}.jsonl",
            )
            with sessions_lock:
                sessions[function.name] = session

        with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
            futures = {pool.submit(_task, fn): fn for fn in fuzzable}
            done, pending = wait(futures, return_when=FIRST_EXCEPTION)
            if any(f.exception() is not None for f in done if not f.cancelled()):
                for f in pending:
                    f.cancel()
            if pending:
                wait(pending)
            errors = [
                f.exception()
                for f in futures
                if not f.cancelled() and f.exception() is not None
            ]
            hard = [
                e
                for e in errors
                if not isinstance(e, (BackendUnreachableError, RateLimitedExhaustedError))
            ]
            if hard:
                raise hard[0]
            if errors:
                backend_error = errors[0].code  # type: ignore[union-attr]
                log.error("run aborted, backend unusable: %s", errors[0])

    ledger = load_ledger(workspace / "run.ldjson")
    report = compute_report(ledger)
    return PipelineResult(
        ledger=ledger,
        report=report,
        sessions=sessions,
        exports=exports,
        backend_error=backend_error,
        stats=stats,
    )
