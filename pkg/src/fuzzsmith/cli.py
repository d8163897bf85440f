"""Command-line front end.

Subcommands:

    analyze  — parse a shared library and print its export surface
    run      — drive the full generate/compile/smoke pipeline
    report   — render the coverage report of a finished run (read-only)
    replay   — re-run a pipeline from recorded chat transcripts

Exit codes: 0 full coverage (or clean analyze), 1 partial coverage,
2 input errors, 3 configuration errors, 4 backend errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path

from . import __version__
from .config import (
    PipelineConfig,
    load_config,
    make_backend,
    make_compile_config,
    make_provider,
)
from .disasm import AdapterProvider, BuiltinProvider, render_c_declaration
from .elf import ExportedFunction, filter_fuzzable, list_exports, load_binary
from .errors import (
    AdapterUnavailableError,
    BackendUnreachableError,
    CompilerNotFoundError,
    FatalConfigError,
    FuzzsmithError,
    IoFailureError,
    MalformedLedgerError,
    MalformedResponseError,
    MissingPlaceholderError,
    NoDynsymError,
    NotElfError,
    RateLimitedExhaustedError,
    TruncatedElfError,
    UnknownFunctionError,
    UnsupportedClassError,
)
from .ledger import ReportFormat, compute_report, load_ledger, render_report, report_to_dict
from .orchestrator import run_pipeline

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_BACKEND = 4

_INPUT_ERRORS = (
    NotElfError,
    UnsupportedClassError,
    NoDynsymError,
    TruncatedElfError,
    MalformedLedgerError,
    IoFailureError,
    UnknownFunctionError,
    FileNotFoundError,
)
_CONFIG_ERRORS = (
    FatalConfigError,
    CompilerNotFoundError,
    MissingPlaceholderError,
    AdapterUnavailableError,
)
_BACKEND_ERRORS = (
    BackendUnreachableError,
    RateLimitedExhaustedError,
    MalformedResponseError,
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", default=argparse.SUPPRESS, help="path to a JSON run configuration"
    )
    common.add_argument(
        "--workspace", default=argparse.SUPPRESS, help="directory for run artifacts"
    )
    common.add_argument(
        "--json",
        action="store_true",
        default=argparse.SUPPRESS,
        help="machine-readable JSON output",
    )
    common.add_argument(
        "--verbose", action="store_true", default=argparse.SUPPRESS,
        help="chatty progress logging",
    )

    parser = argparse.ArgumentParser(
        prog="fuzzsmith",
        description="Generate, compile, and smoke-test libFuzzer drivers "
        "for every exported function of a shared library.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"fuzzsmith {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser(
        "analyze", parents=[common], help="inspect a library's exported functions"
    )
    p_analyze.add_argument("library", help="path to an ELF64 shared object")
    p_analyze.add_argument(
        "--adapter",
        help="external disassembler command (JSON-over-stdio adapter)",
    )
    p_analyze.set_defaults(func=cmd_analyze)

    p_run = sub.add_parser(
        "run", parents=[common], help="run the full pipeline from a config file"
    )
    p_run.set_defaults(func=cmd_run)

    p_report = sub.add_parser(
        "report", parents=[common], help="render the coverage report of a run"
    )
    p_report.add_argument(
        "target",
        nargs="?",
        default=".",
        help="run workspace or ledger file (default: current directory)",
    )
    p_report.add_argument(
        "--format",
        choices=["table", "json", "csv"],
        default="table",
        help="output format (default: table)",
    )
    p_report.set_defaults(func=cmd_report)

    p_replay = sub.add_parser(
        "replay",
        parents=[common],
        help="re-run the pipeline from recorded chat transcripts",
    )
    p_replay.add_argument(
        "--from",
        dest="source",
        help="workspace of the recorded run (defaults to the config's transcript_dir)",
    )
    p_replay.set_defaults(func=cmd_replay)

    return parser


def _flag(args: argparse.Namespace, name: str):
    return getattr(args, name, None)


def _make_signature_cache(image, provider):
    cache: dict[str, object] = {}

    def signature_of(function: ExportedFunction):
        sig = provider.infer_signature(image, function)
        cache[function.name] = sig
        return sig

    return cache, signature_of


def cmd_analyze(args: argparse.Namespace) -> int:
    library = Path(args.library)
    image = load_binary(library)
    provider = (
        AdapterProvider(shlex.split(args.adapter)) if args.adapter else BuiltinProvider()
    )
    try:
        cache, signature_of = _make_signature_cache(image, provider)
        exports = filter_fuzzable(list_exports(image), signature_of)
    finally:
        if hasattr(provider, "close"):
            provider.close()

    rows = []
    for export in exports:
        sig = cache.get(export.name)
        rows.append(
            {
                "name": export.name,
                "address": f"0x{export.address:x}",
                "binding": export.binding.name,
                "fuzzable": export.fuzzable,
                "exclusion_reason": (
                    export.exclusion_reason.value if export.exclusion_reason else None
                ),
                "signature": render_c_declaration(sig) if sig else None,
                "return_class": sig.return_class.value if sig else None,
                "param_classes": [p.value for p in sig.params] if sig else None,
                "confidence": sig.confidence.value if sig else None,
            }
        )
    payload = {
        "library": library.name,
        "path": str(library),
        "export_count": len(rows),
        "fuzzable_count": sum(1 for r in rows if r["fuzzable"]),
        "exports": rows,
    }
    if _flag(args, "json"):
        print(json.dumps(payload, indent=2))
    else:
        print(f"{library.name}: {payload['export_count']} exported functions, "
              f"{payload['fuzzable_count']} fuzzable")
        for row in rows:
            marker = "+" if row["fuzzable"] else "-"
            detail = row["signature"] or f"excluded: {row['exclusion_reason']}"
            print(f"  {marker} {row['address']} {row['name']}: {detail}")
    return EXIT_OK


def _load_run_inputs(args: argparse.Namespace) -> tuple[PipelineConfig, Path]:
    config_path = _flag(args, "config")
    if not config_path:
        raise FatalConfigError("this command needs --config")
    config = load_config(config_path)
    workspace = _flag(args, "workspace") or config.workspace
    if workspace is None:
        raise FatalConfigError("no workspace: pass --workspace or set it in the config")
    return config, Path(workspace)


def _finish_run(result, args: argparse.Namespace) -> int:
    if _flag(args, "json"):
        payload = report_to_dict(result.report)
        payload["backend_error"] = result.backend_error
        print(json.dumps(payload, indent=2))
    else:
        print(render_report(result.report, ReportFormat.TABLE_TEXT))
        if result.backend_error:
            print(f"backend error: {result.backend_error}", file=sys.stderr)
    if result.backend_error:
        return EXIT_BACKEND
    return EXIT_OK if result.full_coverage else EXIT_PARTIAL


def cmd_run(args: argparse.Namespace) -> int:
    config, workspace = _load_run_inputs(args)
    provider = make_provider(config)
    backend, factory = make_backend(config, workspace)
    try:
        result = run_pipeline(
            config.library,
            workspace,
            provider=provider,
            backend=backend,
            backend_factory=factory,
            budgets=config.budgets,
            compile_config=make_compile_config(config),
            template_dir=config.template_dir,
            parallelism=config.parallelism,
            config_snapshot=config.snapshot,
        )
    finally:
        if hasattr(provider, "close"):
            provider.close()
    return _finish_run(result, args)


def cmd_replay(args: argparse.Namespace) -> int:
    from .backends import ReplayBackend

    config, workspace = _load_run_inputs(args)
    if args.source:
        transcript_dir = Path(args.source) / "transcripts"
    elif config.backend.transcript_dir:
        transcript_dir = Path(config.backend.transcript_dir)
    else:
        raise FatalConfigError(
            "no transcript source: pass --from or set backend.transcript_dir"
        )

    def factory(function_name: str):
        return ReplayBackend.from_file(transcript_dir / f"{function_name}.jsonl")

    provider = make_provider(config)
    try:
        result = run_pipeline(
            config.library,
            workspace,
            provider=provider,
            backend_factory=factory,
            budgets=config.budgets,
            compile_config=make_compile_config(config),
            template_dir=config.template_dir,
            parallelism=config.parallelism,
            config_snapshot=config.snapshot,
        )
    finally:
        if hasattr(provider, "close"):
            provider.close()
    return _finish_run(result, args)


def cmd_report(args: argparse.Namespace) -> int:
    target = Path(args.target)
    ledger_path = target / "run.ldjson" if target.is_dir() else target
    if not ledger_path.exists():
        raise FileNotFoundError(f"no ledger at {ledger_path}")
    ledger = load_ledger(ledger_path)
    report = compute_report(ledger)
    fmt = ReportFormat.JSON if _flag(args, "json") else {
        "table": ReportFormat.TABLE_TEXT,
        "json": ReportFormat.JSON,
        "csv": ReportFormat.CSV,
    }[args.format]
    output = render_report(report, fmt)
    print(output, end="" if fmt is ReportFormat.CSV else "\n")
    if report.vacuous_coverage:
        return EXIT_OK
    return EXIT_OK if report.api_coverage_pct == 100.0 else EXIT_PARTIAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if _flag(args, "verbose") else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {_code(exc)}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _BACKEND_ERRORS as exc:
        print(f"error: {_code(exc)}: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except _INPUT_ERRORS as exc:
        print(f"error: {_code(exc)}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FuzzsmithError as exc:
        print(f"error: {_code(exc)}: {exc}", file=sys.stderr)
        return EXIT_INPUT


def _code(exc: BaseException) -> str:
    return getattr(exc, "code", type(exc).__name__)


if __name__ == "__main__":
    sys.exit(main())
