"""Durable per-attempt outcome records and the coverage report.

The ledger is a line-delimited JSON file (`run.ldjson`): one header
record, then one record per driver attempt and one outcome record per
finished function session. Every append is flushed and fsynced, so a
killed run reloads to exactly the state it had at the last successful
append. Loading tolerates a truncated final line (the write that died
mid-flight).

Report arithmetic uses decimal round-half-up at two places, so the
canonical totals (1209/1601 → 75.52%, 1601/558 → 2.87) reproduce
exactly.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .errors import IoFailureError, MalformedLedgerError, UnknownFunctionError

LEDGER_SCHEMA = "fuzzsmith-ledger"
LEDGER_VERSION = 1
LEDGER_FILENAME = "run.ldjson"
WORKSPACE_TOKEN = "<workspace>"


def scrub_workspace(text: str, workspace: Path | str | None) -> str:
    """Make workspace-dependent text stable across runs."""
    if not text or workspace is None:
        return text
    return text.replace(str(workspace), WORKSPACE_TOKEN)


@dataclass(frozen=True)
class CompileSummary:
    success: bool
    stderr: str
    artifact_path: str | None
    duration: float
    command: str = ""


@dataclass(frozen=True)
class ExecSummary:
    verdict: str
    exit_status: int | None
    wall_time: float
    output: str


@dataclass(frozen=True)
class AttemptRecord:
    function_name: str
    attempt_index: int
    source_path: str | None
    extracted_from: str | None
    extract_error: str | None
    compile: CompileSummary | None
    exec: ExecSummary | None
    timestamp: str

    def __post_init__(self):
        if self.exec is not None and (self.compile is None or not self.compile.success):
            raise MalformedLedgerError(
                "exec result recorded for an attempt that did not compile"
            )


@dataclass(frozen=True)
class OutcomeRecord:
    function_name: str
    state: str  # "DONE" | "FAILED"
    reason: str | None
    analysis_turns_used: int
    generation_attempts_used: int
    wall_time: float


@dataclass
class FunctionOutcome:
    function_name: str
    attempts: list[AttemptRecord] = field(default_factory=list)
    outcome: OutcomeRecord | None = None


@dataclass
class RunLedger:
    library_name: str
    run_id: str
    fuzzable_exports: list[str]
    config_snapshot: str
    functions: dict[str, FunctionOutcome] = field(default_factory=dict)

    def __post_init__(self):
        for name in self.fuzzable_exports:
            self.functions.setdefault(name, FunctionOutcome(name))

    def all_attempts(self) -> list[AttemptRecord]:
        out = []
        for name in self.fuzzable_exports:
            out.extend(self.functions[name].attempts)
        return out


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


# ---------------------------------------------------------------------------
# Serialization


def _attempt_to_dict(a: AttemptRecord) -> dict:
    rec: dict = {
        "record": "attempt",
        "function_name": a.function_name,
        "attempt_index": a.attempt_index,
        "source_path": a.source_path,
        "extracted_from": a.extracted_from,
        "extract_error": a.extract_error,
        "timestamp": a.timestamp,
        "compile": None,
        "exec": None,
    }
    if a.compile is not None:
        rec["compile"] = {
            "success": a.compile.success,
            "stderr": a.compile.stderr,
            "artifact_path": a.compile.artifact_path,
            "duration": a.compile.duration,
            "command": a.compile.command,
        }
    if a.exec is not None:
        rec["exec"] = {
            "verdict": a.exec.verdict,
            "exit_status": a.exec.exit_status,
            "wall_time": a.exec.wall_time,
            "output": a.exec.output,
        }
    return rec


def _attempt_from_dict(rec: Mapping) -> AttemptRecord:
    compile_summary = None
    if rec.get("compile") is not None:
        c = rec["compile"]
        compile_summary = CompileSummary(
            success=bool(c["success"]),
            stderr=str(c.get("stderr", "")),
            artifact_path=c.get("artifact_path"),
            duration=float(c.get("duration", 0.0)),
            command=str(c.get("command", "")),
        )
    exec_summary = None
    if rec.get("exec") is not None:
        e = rec["exec"]
        exec_summary = ExecSummary(
            verdict=str(e["verdict"]),
            exit_status=e.get("exit_status"),
            wall_time=float(e.get("wall_time", 0.0)),
            output=str(e.get("output", "")),
        )
    return AttemptRecord(
        function_name=str(rec["function_name"]),
        attempt_index=int(rec["attempt_index"]),
        source_path=rec.get("source_path"),
        extracted_from=rec.get("extracted_from"),
        extract_error=rec.get("extract_error"),
        compile=compile_summary,
        exec=exec_summary,
        timestamp=str(rec.get("timestamp", "")),
    )


def _outcome_to_dict(o: OutcomeRecord) -> dict:
    return {
        "record": "outcome",
        "function_name": o.function_name,
        "state": o.state,
        "reason": o.reason,
        "analysis_turns_used": o.analysis_turns_used,
        "generation_attempts_used": o.generation_attempts_used,
        "wall_time": o.wall_time,
    }


def _outcome_from_dict(rec: Mapping) -> OutcomeRecord:
    return OutcomeRecord(
        function_name=str(rec["function_name"]),
        state=str(rec["state"]),
        reason=rec.get("reason"),
        analysis_turns_used=int(rec.get("analysis_turns_used", 0)),
        generation_attempts_used=int(rec.get("generation_attempts_used", 0)),
        wall_time=float(rec.get("wall_time", 0.0)),
    )


class LedgerWriter:
    """Single-writer append channel for one run's ledger file.

    Appends are serialized behind a lock and made durable (flush +
    fsync) before returning.
    """

    def __init__(
        self,
        path: str | Path,
        library_name: str,
        run_id: str,
        fuzzable_exports: Iterable[str],
        config_snapshot: str = "",
    ):
        self.path = Path(path)
        self.fuzzable = list(fuzzable_exports)
        self._known = set(self.fuzzable)
        self._lock = threading.Lock()
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            fresh = not self.path.exists() or self.path.stat().st_size == 0
            self._fh = open(self.path, "a", encoding="utf-8")
        except OSError as exc:
            raise IoFailureError(f"cannot open ledger {self.path}: {exc}") from exc
        if fresh:
            self._append(
                {
                    "record": "header",
                    "schema": LEDGER_SCHEMA,
                    "version": LEDGER_VERSION,
                    "library_name": library_name,
                    "run_id": run_id,
                    "fuzzable_exports": self.fuzzable,
                    "config_snapshot": config_snapshot,
                    "created_at": utc_now_iso(),
                }
            )

    def _append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            try:
                self._fh.write(line + "\n")
                self._fh.flush()
                os.fsync(self._fh.fileno())
            except OSError as exc:
                raise IoFailureError(f"ledger append failed: {exc}") from exc

    def record_attempt(self, attempt: AttemptRecord) -> None:
        if attempt.function_name not in self._known:
            raise UnknownFunctionError(
                f"{attempt.function_name!r} is not a fuzzable export of this run"
            )
        self._append(_attempt_to_dict(attempt))

    def record_outcome(self, outcome: OutcomeRecord) -> None:
        if outcome.function_name not in self._known:
            raise UnknownFunctionError(
                f"{outcome.function_name!r} is not a fuzzable export of this run"
            )
        self._append(_outcome_to_dict(outcome))

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()

    def __enter__(self) -> "LedgerWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def load_ledger(path: str | Path) -> RunLedger:
    """Reconstruct a RunLedger from its file.

    A truncated final line (a write cut off by a crash) is ignored;
    malformed content anywhere else raises MalformedLedgerError.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot read ledger {path}: {exc}") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    records = []
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            if i == len(lines) - 1 and not text.endswith("\n"):
                break  # torn final write
            raise MalformedLedgerError(f"{path}:{i + 1}: bad JSON: {exc}") from exc
    if not records or records[0].get("record") != "header":
        raise MalformedLedgerError(f"{path}: missing ledger header record")
    header = records[0]
    if header.get("schema") != LEDGER_SCHEMA:
        raise MalformedLedgerError(f"{path}: not a ledger file")
    ledger = RunLedger(
        library_name=str(header.get("library_name", "")),
        run_id=str(header.get("run_id", "")),
        fuzzable_exports=[str(n) for n in header.get("fuzzable_exports", [])],
        config_snapshot=str(header.get("config_snapshot", "")),
    )
    for rec in records[1:]:
        kind = rec.get("record")
        if kind == "attempt":
            attempt = _attempt_from_dict(rec)
            entry = ledger.functions.setdefault(
                attempt.function_name, FunctionOutcome(attempt.function_name)
            )
            entry.attempts.append(attempt)
        elif kind == "outcome":
            outcome = _outcome_from_dict(rec)
            entry = ledger.functions.setdefault(
                outcome.function_name, FunctionOutcome(outcome.function_name)
            )
            entry.outcome = outcome
        else:
            raise MalformedLedgerError(f"{path}: unknown record type {kind!r}")
    return ledger


# ---------------------------------------------------------------------------
# Coverage report


class ReportFormat(Enum):
    TABLE_TEXT = "TABLE_TEXT"
    JSON = "JSON"
    CSV = "CSV"


@dataclass(frozen=True)
class CoverageReport:
    library_name: str
    fuzzable_exports: int
    source_targets: int
    compiled_targets: int  # attempts whose compile succeeded
    nominal_targets: int  # attempts whose smoke-run verdict was NOMINAL
    api_coverage_pct: float
    mean_sources_per_function: float
    vacuous_coverage: bool


def _round2(numerator: int, denominator: int, scale: int = 1) -> float:
    if denominator == 0:
        return 0.0
    value = Decimal(numerator) * scale / Decimal(denominator)
    return float(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def compute_report(ledger: RunLedger) -> CoverageReport:
    fuzzable = len(ledger.fuzzable_exports)
    attempts = ledger.all_attempts()
    sources = len(attempts)
    compiled = sum(1 for a in attempts if a.compile is not None and a.compile.success)
    nominal = sum(1 for a in attempts if a.exec is not None and a.exec.verdict == "NOMINAL")
    covered = sum(
        1
        for name in ledger.fuzzable_exports
        if any(
            a.exec is not None and a.exec.verdict == "NOMINAL"
            for a in ledger.functions[name].attempts
        )
    )
    vacuous = fuzzable == 0
    coverage = 100.0 if vacuous else _round2(covered, fuzzable, scale=100)
    mean_sources = 0.0 if vacuous else _round2(sources, fuzzable)
    return CoverageReport(
        library_name=ledger.library_name or "Total",
        fuzzable_exports=fuzzable,
        source_targets=sources,
        compiled_targets=compiled,
        nominal_targets=nominal,
        api_coverage_pct=coverage,
        mean_sources_per_function=mean_sources,
        vacuous_coverage=vacuous,
    )


def nominal_validity_pct(report: CoverageReport) -> float:
    """Share of generated sources that ran nominally (prose metric)."""
    return _round2(report.nominal_targets, report.source_targets, scale=100)


def _fmt_pct(value: float) -> str:
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return text or "0"


TABLE_COLUMNS = (
    "Library",
    "Fuzzable Exports",
    "Target Source Code",
    "Compiled Targets",
    "API Coverage %",
)


def render_report(report: CoverageReport, format: ReportFormat) -> str:
    if format is ReportFormat.TABLE_TEXT:
        return _render_table(report)
    if format is ReportFormat.JSON:
        return json.dumps(report_to_dict(report), indent=2, sort_keys=True)
    if format is ReportFormat.CSV:
        return _render_csv(report)
    raise ValueError(f"unknown report format {format!r}")


def _render_table(report: CoverageReport) -> str:
    # The "Compiled Targets" column mirrors the published accounting:
    # targets that compiled AND passed the smoke run (the prose's
    # "nominally valid" reading of that column).
    lines = [" | ".join(TABLE_COLUMNS)]
    lines.append(
        " | ".join(
            [
                report.library_name,
                str(report.fuzzable_exports),
                str(report.source_targets),
                str(report.nominal_targets),
                _fmt_pct(report.api_coverage_pct),
            ]
        )
    )
    if report.vacuous_coverage:
        lines.append("(no fuzzable exports; coverage is vacuously 100)")
    return "\n".join(lines)


def _render_csv(report: CoverageReport) -> str:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(
        [
            "library_name",
            "fuzzable_exports",
            "source_targets",
            "compiled_targets",
            "nominal_targets",
            "api_coverage_pct",
            "mean_sources_per_function",
            "vacuous_coverage",
        ]
    )
    writer.writerow(
        [
            report.library_name,
            report.fuzzable_exports,
            report.source_targets,
            report.compiled_targets,
            report.nominal_targets,
            report.api_coverage_pct,
            report.mean_sources_per_function,
            report.vacuous_coverage,
        ]
    )
    return buf.getvalue()


def report_to_dict(report: CoverageReport) -> dict:
    return {
        "library_name": report.library_name,
        "fuzzable_exports": report.fuzzable_exports,
        "source_targets": report.source_targets,
        "compiled_targets": report.compiled_targets,
        "nominal_targets": report.nominal_targets,
        "api_coverage_pct": report.api_coverage_pct,
        "mean_sources_per_function": report.mean_sources_per_function,
        "vacuous_coverage": report.vacuous_coverage,
        "nominal_validity_pct": nominal_validity_pct(report),
    }


def report_from_dict(data: Mapping) -> CoverageReport:
    return CoverageReport(
        library_name=str(data["library_name"]),
        fuzzable_exports=int(data["fuzzable_exports"]),
        source_targets=int(data["source_targets"]),
        compiled_targets=int(data["compiled_targets"]),
        nominal_targets=int(data["nominal_targets"]),
        api_coverage_pct=float(data["api_coverage_pct"]),
        mean_sources_per_function=float(data["mean_sources_per_function"]),
        vacuous_coverage=bool(data["vacuous_coverage"]),
    )


# ---------------------------------------------------------------------------
# Replay normalization


_VOLATILE_HEADER_KEYS = ("run_id", "created_at", "config_snapshot")


def normalized_view(ledger: RunLedger) -> dict:
    """Canonical, timing-free structure for cross-run comparison.

    Nulls every wall-clock artifact (timestamps, durations, run ids) and
    groups records per function, so two runs of identical work compare
    equal regardless of scheduling interleave.
    """
    functions = {}
    for name in sorted(ledger.functions):
        entry = ledger.functions[name]
        attempts = []
        for a in sorted(entry.attempts, key=lambda r: r.attempt_index):
            rec = _attempt_to_dict(a)
            rec["timestamp"] = None
            if rec["compile"] is not None:
                rec["compile"]["duration"] = None
            if rec["exec"] is not None:
                rec["exec"]["wall_time"] = None
                rec["exec"]["output"] = None  # scheduler-dependent fuzzer chatter
            attempts.append(rec)
        outcome = None
        if entry.outcome is not None:
            outcome = _outcome_to_dict(entry.outcome)
            outcome["wall_time"] = None
        functions[name] = {"attempts": attempts, "outcome": outcome}
    return {
        "library_name": ledger.library_name,
        "fuzzable_exports": sorted(ledger.fuzzable_exports),
        "functions": functions,
    }


def normalized_dump(ledger: RunLedger) -> str:
    return json.dumps(normalized_view(ledger), indent=2, sort_keys=True)
