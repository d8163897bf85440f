"""Run configuration: JSON file in, validated pipeline inputs out.

A config file names the target library, the chat backend, the budgets,
and the execution knobs. Secrets never live here: the HTTP backend
reads its bearer token from an environment variable at request time,
and a config that embeds a key is rejected outright.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .backends import (
    Backend,
    HttpBackend,
    ReplayBackend,
    ScriptedBackend,
    ScriptRule,
)
from .disasm import AdapterProvider, BuiltinProvider, DisassemblyProvider
from .errors import FatalConfigError
from .forge import CompileConfig
from .orchestrator import Budgets, DEFAULT_PARALLELISM

BACKEND_KINDS = ("http", "replay", "scripted")
PROVIDER_KINDS = ("builtin", "adapter")

_TOP_LEVEL_KEYS = {
    "library",
    "workspace",
    "backend",
    "budgets",
    "parallelism",
    "provider",
    "adapter_command",
    "compile_command",
    "template_dir",
}
_BACKEND_KEYS = {
    "kind",
    "endpoint",
    "model",
    "api_key_env",
    "timeout_seconds",
    "transcript_dir",
    "script",
}
_BUDGET_KEYS = {
    "max_analysis_turns",
    "max_generation_attempts",
    "smoke_run_seconds",
    "rate_budget_per_minute",
    "compaction_ceiling_tokens",
}

_SECRET_KEY_PATTERN = re.compile(r"(api[-_]?key|token|secret|password)$", re.IGNORECASE)


@dataclass(frozen=True)
class BackendSettings:
    kind: str = "http"
    endpoint: str = ""
    model: str = ""
    api_key_env: str = "FUZZSMITH_API_KEY"
    timeout_seconds: float = 120.0
    transcript_dir: str | None = None
    script: str | None = None


@dataclass(frozen=True)
class PipelineConfig:
    library: Path
    workspace: Path | None = None
    backend: BackendSettings = field(default_factory=BackendSettings)
    budgets: Budgets = field(default_factory=Budgets)
    parallelism: int = DEFAULT_PARALLELISM
    provider_kind: str = "builtin"
    adapter_command: tuple[str, ...] = ()
    compile_command: str | None = None
    template_dir: Path | None = None
    snapshot: str = "{}"


def _fail(path: str, message: str) -> FatalConfigError:
    return FatalConfigError(f"config {path}: {message}")


def _require_keys(data: dict, allowed: set, where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise _fail(where, f"unknown keys {sorted(unknown)}")


def _reject_inline_secrets(data: dict, where: str) -> None:
    for key, value in data.items():
        here = f"{where}.{key}" if where else key
        if isinstance(value, dict):
            _reject_inline_secrets(value, here)
        elif _SECRET_KEY_PATTERN.search(key) and not key.endswith("_env"):
            raise _fail(here, "secrets belong in the environment, not the config file")


def _positive_int(data: dict, key: str, default: int, where: str) -> int:
    value = data.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise _fail(f"{where}.{key}", f"expected a positive integer, got {value!r}")
    return value


def _positive_number(data: dict, key: str, default: float, where: str) -> float:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
        raise _fail(f"{where}.{key}", f"expected a positive number, got {value!r}")
    return float(value)


def parse_config(data: dict, base_dir: Path | None = None) -> PipelineConfig:
    """Validate a decoded config object; every fault names its JSON path."""
    if not isinstance(data, dict):
        raise _fail("$", "top-level value must be an object")
    _require_keys(data, _TOP_LEVEL_KEYS, "$")
    _reject_inline_secrets(data, "")

    base = Path(base_dir) if base_dir is not None else Path.cwd()

    def _path(value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    library = data.get("library")
    if not isinstance(library, str) or not library:
        raise _fail("library", "a library path is required")

    workspace = data.get("workspace")
    if workspace is not None and (not isinstance(workspace, str) or not workspace):
        raise _fail("workspace", "expected a non-empty path string")

    raw_backend = data.get("backend", {})
    if not isinstance(raw_backend, dict):
        raise _fail("backend", "expected an object")
    _require_keys(raw_backend, _BACKEND_KEYS, "backend")
    kind = raw_backend.get("kind", "http")
    if kind not in BACKEND_KINDS:
        raise _fail("backend.kind", f"expected one of {BACKEND_KINDS}, got {kind!r}")
    if kind == "http":
        if not raw_backend.get("endpoint"):
            raise _fail("backend.endpoint", "required for the http backend")
        if not raw_backend.get("model"):
            raise _fail("backend.model", "required for the http backend")
    if kind == "scripted" and not raw_backend.get("script"):
        raise _fail("backend.script", "required for the scripted backend")
    backend = BackendSettings(
        kind=kind,
        endpoint=str(raw_backend.get("endpoint", "")),
        model=str(raw_backend.get("model", "")),
        api_key_env=str(raw_backend.get("api_key_env", "FUZZSMITH_API_KEY")),
        timeout_seconds=_positive_number(raw_backend, "timeout_seconds", 120.0, "backend"),
        transcript_dir=(
            str(_path(raw_backend["transcript_dir"]))
            if raw_backend.get("transcript_dir")
            else None
        ),
        script=str(_path(raw_backend["script"])) if raw_backend.get("script") else None,
    )

    raw_budgets = data.get("budgets", {})
    if not isinstance(raw_budgets, dict):
        raise _fail("budgets", "expected an object")
    _require_keys(raw_budgets, _BUDGET_KEYS, "budgets")
    budgets = Budgets(
        max_analysis_turns=_positive_int(raw_budgets, "max_analysis_turns", 6, "budgets"),
        max_generation_attempts=_positive_int(
            raw_budgets, "max_generation_attempts", 10, "budgets"
        ),
        smoke_run_seconds=_positive_number(
            raw_budgets, "smoke_run_seconds", 10.0, "budgets"
        ),
        rate_budget_per_minute=_positive_int(
            raw_budgets, "rate_budget_per_minute", 10, "budgets"
        ),
        compaction_ceiling_tokens=_positive_int(
            raw_budgets, "compaction_ceiling_tokens", 12000, "budgets"
        ),
    )

    parallelism = _positive_int(data, "parallelism", DEFAULT_PARALLELISM, "$")

    provider_kind = data.get("provider", "builtin")
    if provider_kind not in PROVIDER_KINDS:
        raise _fail("provider", f"expected one of {PROVIDER_KINDS}, got {provider_kind!r}")
    adapter_command = data.get("adapter_command", [])
    if provider_kind == "adapter":
        if (
            not isinstance(adapter_command, list)
            or not adapter_command
            or not all(isinstance(a, str) for a in adapter_command)
        ):
            raise _fail("adapter_command", "expected a non-empty list of strings")

    compile_command = data.get("compile_command")
    if compile_command is not None and not isinstance(compile_command, str):
        raise _fail("compile_command", "expected a command template string")

    template_dir = data.get("template_dir")
    if template_dir is not None and not isinstance(template_dir, str):
        raise _fail("template_dir", "expected a directory path string")

    return PipelineConfig(
        library=_path(library),
        workspace=_path(workspace) if workspace else None,
        backend=backend,
        budgets=budgets,
        parallelism=parallelism,
        provider_kind=provider_kind,
        adapter_command=tuple(adapter_command),
        compile_command=compile_command,
        template_dir=_path(template_dir) if template_dir else None,
        snapshot=json.dumps(data, sort_keys=True),
    )


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FatalConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FatalConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data, base_dir=path.parent)


def make_provider(config: PipelineConfig) -> DisassemblyProvider:
    if config.provider_kind == "adapter":
        return AdapterProvider(config.adapter_command)
    return BuiltinProvider()


def make_compile_config(config: PipelineConfig) -> CompileConfig:
    if config.compile_command:
        return CompileConfig(command_template=config.compile_command)
    return CompileConfig()


def load_script_rules(path: str | Path) -> list[ScriptRule]:
    """Rule file for the scripted backend: a JSON array of rule objects."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FatalConfigError(f"cannot read script rules {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FatalConfigError(f"script rules {path} are not valid JSON: {exc}") from exc
    if not isinstance(data, list) or not data:
        raise FatalConfigError(f"script rules {path}: expected a non-empty JSON array")
    rules = []
    for i, item in enumerate(data):
        if not isinstance(item, dict) or "match" not in item or "response" not in item:
            raise FatalConfigError(
                f"script rules {path}[{i}]: each rule needs 'match' and 'response'"
            )
        matcher: str | re.Pattern = str(item["match"])
        if item.get("regex"):
            matcher = re.compile(str(item["match"]))
        rules.append(
            ScriptRule(
                matcher=matcher,
                response=str(item["response"]),
                once=bool(item.get("once", False)),
            )
        )
    return rules


def make_backend(
    config: PipelineConfig, workspace: Path
) -> tuple[Backend | None, Callable[[str], Backend] | None]:
    """Build the configured backend.

    Returns `(backend, None)` for shared backends and `(None, factory)`
    for the replay backend, which needs one recorded transcript per
    function.
    """
    settings = config.backend
    if settings.kind == "http":
        return (
            HttpBackend(
                endpoint=settings.endpoint,
                model=settings.model,
                api_key_env=settings.api_key_env,
                timeout=settings.timeout_seconds,
            ),
            None,
        )
    if settings.kind == "scripted":
        rules = load_script_rules(Path(settings.script))
        return ScriptedBackend(rules), None
    transcript_dir = (
        Path(settings.transcript_dir)
        if settings.transcript_dir
        else workspace / "transcripts"
    )

    def factory(function_name: str) -> Backend:
        return ReplayBackend.from_file(transcript_dir / f"{function_name}.jsonl")

    return None, factory
