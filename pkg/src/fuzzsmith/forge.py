"""Materialize, compile, and smoke-run generated fuzz drivers.

The forge takes an assistant's reply, extracts the C/C++ source, writes
it into the per-attempt workspace, compiles it against the target
library with fuzzer instrumentation, and validates the binary with a
short bounded execution whose outcome is classified into one of four
verdicts:

* NOMINAL - still fuzzing when the harness killed it at the window, or
  exited 0 after running the full window.
* CRASH - died on a signal or with sanitizer/fuzzer crash markers.
* SETUP_FAILURE - nonzero exit within the first second (loader errors,
  missing libraries) or a spawn failure.
* EARLY_EXIT_FAILURE - any other premature exit.
"""

from __future__ import annotations

import math
import os
import re
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import CompilerNotFoundError, NoCodeFoundError

FUZZ_ENTRYPOINT = "LLVMFuzzerTestOneInput"

DEFAULT_COMPILE_TEMPLATE = (
    "clang++ -g -O1 -fsanitize=fuzzer,address {source} -o {output} "
    "-L{library_dir} -l:{library_name}"
)

COMPILE_TIMEOUT_SECONDS = 120.0
OUTPUT_CAP_BYTES = 32 * 1024
TRUNCATION_MARKER = "\n[output truncated]"
GRACE_SECONDS = 1.0
SETUP_FAILURE_HORIZON_SECONDS = 1.0

_CRASH_MARKERS = (
    "AddressSanitizer",
    "DEADLYSIGNAL",
    "deadly signal",
    "Segmentation fault",
    "UndefinedBehaviorSanitizer",
)

_FENCE_RE = re.compile(r"```([^\n`]*)\n(.*?)```", re.DOTALL)
_C_TAGS = {"", "c", "cpp", "c++", "cc", "cxx"}


class ExtractedFrom(Enum):
    FENCED_BLOCK = "FENCED_BLOCK"
    RAW_BODY = "RAW_BODY"


class Verdict(Enum):
    NOMINAL = "NOMINAL"
    EARLY_EXIT_FAILURE = "EARLY_EXIT_FAILURE"
    CRASH = "CRASH"
    SETUP_FAILURE = "SETUP_FAILURE"


@dataclass(frozen=True)
class DriverSource:
    function_name: str
    attempt_index: int  # 1-based
    code: str
    extracted_from: ExtractedFrom
    path: str  # workspace-relative


@dataclass(frozen=True)
class CompileConfig:
    command_template: str = DEFAULT_COMPILE_TEMPLATE
    timeout_seconds: float = COMPILE_TIMEOUT_SECONDS


@dataclass(frozen=True)
class CompileResult:
    success: bool
    stderr: str
    artifact_path: Path | None
    duration: float
    command: str = ""


@dataclass(frozen=True)
class RunConfig:
    window_seconds: float = 10.0
    output_cap_bytes: int = OUTPUT_CAP_BYTES
    library_dir: Path | None = None
    env_overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExecResult:
    verdict: Verdict
    exit_status: int | None  # negative values are signal numbers
    captured_output: str
    wall_time: float


def extract_source(
    assistant_text: str, function_name: str, attempt_index: int
) -> DriverSource:
    """Pull driver source out of a model reply.

    Fenced blocks tagged as C/C++ (or untagged) are concatenated in
    order; a reply without usable fences is taken whole. The result must
    contain the fuzz entrypoint symbol.
    """
    if not assistant_text.strip():
        raise NoCodeFoundError("assistant reply is empty")
    blocks = [
        body
        for tag, body in _FENCE_RE.findall(assistant_text)
        if tag.strip().lower() in _C_TAGS
    ]
    if blocks:
        code = "\n".join(b.strip("\n") for b in blocks) + "\n"
        origin = ExtractedFrom.FENCED_BLOCK
    else:
        code = assistant_text
        origin = ExtractedFrom.RAW_BODY
    if FUZZ_ENTRYPOINT not in code:
        raise NoCodeFoundError(
            f"reply contains no {FUZZ_ENTRYPOINT} definition; nothing to compile"
        )
    return DriverSource(
        function_name=function_name,
        attempt_index=attempt_index,
        code=code,
        extracted_from=origin,
        path=f"{function_name}/{attempt_index}/driver.cc",
    )


def write_source(source: DriverSource, workspace: Path) -> Path:
    path = Path(workspace) / source.path
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(source.code, encoding="utf-8")
    return path


def build_compile_command(
    template: str, source_path: Path, output_path: Path, library: Path
) -> str:
    return (
        template.replace("{source}", str(source_path))
        .replace("{output}", str(output_path))
        .replace("{library_dir}", str(Path(library).parent))
        .replace("{library_name}", Path(library).name)
    )


def compile_driver(
    source_path: Path,
    output_path: Path,
    library: Path,
    config: CompileConfig = CompileConfig(),
) -> CompileResult:
    """Run the configured compiler command; stderr is captured in full."""
    command = build_compile_command(
        config.command_template, source_path, output_path, library
    )
    argv = shlex.split(command)
    started = time.monotonic()
    try:
        proc = subprocess.run(
            argv,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            timeout=config.timeout_seconds,
        )
    except FileNotFoundError as exc:
        raise CompilerNotFoundError(f"compiler not found: {argv[0]!r}") from exc
    except subprocess.TimeoutExpired:
        duration = time.monotonic() - started
        return CompileResult(
            success=False,
            stderr=f"compile timed out after {config.timeout_seconds:.0f} s",
            artifact_path=None,
            duration=duration,
            command=command,
        )
    duration = time.monotonic() - started
    stderr = proc.stderr.decode("utf-8", errors="replace")
    ok = proc.returncode == 0 and output_path.exists() and os.access(output_path, os.X_OK)
    return CompileResult(
        success=ok,
        stderr=stderr,
        artifact_path=output_path if ok else None,
        duration=duration,
        command=command,
    )


def _cap_output(raw: bytes, cap: int) -> str:
    text = raw.decode("utf-8", errors="replace")
    if len(raw) > cap:
        text = raw[:cap].decode("utf-8", errors="replace") + TRUNCATION_MARKER
    return text


def classify(
    exit_status: int | None, wall_time: float, window: float,
    killed: bool, output: str,
) -> Verdict:
    if killed:
        return Verdict.NOMINAL
    if exit_status is None:
        return Verdict.SETUP_FAILURE
    if exit_status < 0:
        return Verdict.CRASH
    if any(marker in output for marker in _CRASH_MARKERS):
        return Verdict.CRASH
    if exit_status == 0:
        # Clean exit counts as nominal only after (essentially) the full
        # window, e.g. the fuzz engine honoring its own time limit.
        if wall_time >= window - 0.5:
            return Verdict.NOMINAL
        return Verdict.EARLY_EXIT_FAILURE
    if wall_time < SETUP_FAILURE_HORIZON_SECONDS:
        return Verdict.SETUP_FAILURE
    return Verdict.EARLY_EXIT_FAILURE


def smoke_run(
    artifact: Path, window: float = 10.0, config: RunConfig = RunConfig()
) -> ExecResult:
    """Bounded validation run in a fresh directory with an empty corpus.

    The fuzz binary is asked to stop at the window via its own time
    limit, and the harness kills it `GRACE_SECONDS` past the window as a
    backstop. The target library's directory is injected into the
    runtime library search path.
    """
    artifact = Path(artifact)
    run_dir = artifact.parent / f"run-{artifact.name}-{os.getpid()}-{time.monotonic_ns()}"
    corpus_dir = run_dir / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)

    env = dict(os.environ)
    if config.library_dir is not None:
        existing = env.get("LD_LIBRARY_PATH", "")
        env["LD_LIBRARY_PATH"] = (
            f"{config.library_dir}:{existing}" if existing else str(config.library_dir)
        )
    env.update({str(k): str(v) for k, v in config.env_overrides.items()})

    cmd = [
        str(artifact),
        str(corpus_dir),
        f"-max_total_time={max(1, math.ceil(window))}",
    ]
    started = time.monotonic()
    try:
        proc = subprocess.Popen(
            cmd,
            cwd=run_dir,
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
        )
    except OSError as exc:
        return ExecResult(
            verdict=Verdict.SETUP_FAILURE,
            exit_status=None,
            captured_output=f"spawn failure: {exc}",
            wall_time=0.0,
        )
    killed = False
    try:
        raw, _ = proc.communicate(timeout=window + GRACE_SECONDS)
    except subprocess.TimeoutExpired:
        killed = True
        proc.kill()
        raw, _ = proc.communicate()
    wall = min(time.monotonic() - started, window + GRACE_SECONDS)
    output = _cap_output(raw or b"", config.output_cap_bytes)
    verdict = classify(proc.returncode, wall, window, killed, output)
    return ExecResult(
        verdict=verdict,
        exit_status=None if killed else proc.returncode,
        captured_output=output,
        wall_time=wall,
    )
