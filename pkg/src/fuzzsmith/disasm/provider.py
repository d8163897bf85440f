"""Disassembly providers: built-in decoder and external-adapter client.

Both implementations satisfy the same two-method protocol used by the
analysis tools (`get_disassembly`, `infer_signature`) and share the
extent, rendering, and inference logic, so swapping providers can change
presentation details but not inferred arities.
"""

from __future__ import annotations

import functools
import json
import subprocess
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence

from ..elf import BinaryImage, ExportedFunction
from ..errors import AdapterUnavailableError, DecodeFailureError
from . import x86
from .plt import plt_call_targets
from .signature import analyze_instructions

Row = tuple[int, str, str]  # (address, mnemonic, operands)


class TypeClass(Enum):
    INT64 = "INT64"
    INT32 = "INT32"
    FLOAT64 = "FLOAT64"
    PTR_OPAQUE = "PTR_OPAQUE"
    VOID = "VOID"


class Confidence(Enum):
    DERIVED = "DERIVED"
    DEFAULTED = "DEFAULTED"


@dataclass(frozen=True)
class Disassembly:
    function_name: str
    instructions: tuple[Row, ...]
    text: str
    byte_length: int


@dataclass(frozen=True)
class InferredSignature:
    function_name: str
    return_class: TypeClass
    params: tuple[TypeClass, ...]
    confidence: Confidence


_C_TYPE = {
    TypeClass.INT64: "int64_t",
    TypeClass.INT32: "int32_t",
    TypeClass.FLOAT64: "double",
    TypeClass.PTR_OPAQUE: "void *",
    TypeClass.VOID: "void",
}


def render_c_declaration(sig: InferredSignature) -> str:
    """Degraded C prototype in the style the analysis presents to the model."""
    if sig.params:
        params = ", ".join(
            f"{_C_TYPE[p]} arg{i + 1}".replace("* ", "*") for i, p in enumerate(sig.params)
        )
    else:
        params = "void"
    return f'extern "C" {_C_TYPE[sig.return_class]} {sig.function_name}({params});'


def render_rows(rows: Sequence[Row]) -> str:
    lines = []
    for address, mnemonic, operands in rows:
        if operands:
            lines.append(f"{address:#x}:\t{mnemonic}\t{operands}")
        else:
            lines.append(f"{address:#x}:\t{mnemonic}")
    return "\n".join(lines)


def function_extent(image: BinaryImage, function: ExportedFunction) -> tuple[int, int, bool]:
    """(start, length, bounded) for a function's byte range.

    The extent runs to the next defined function symbol in the same
    section. Without one, it runs open-ended to the section end and the
    caller truncates at the first return (bounded=False).
    """
    section = image.section_for_addr(function.address)
    if section is None or not section.executable:
        raise DecodeFailureError(
            f"{function.name}: address {function.address:#x} is not in an "
            "executable section"
        )
    section_end = section.addr + section.size
    boundaries = [
        sym.value
        for sym in image.dynamic_symbols
        if sym.sym_type == 2  # STT_FUNC
        and sym.defined
        and (sym.value > function.address
             or (sym.value == function.address and sym.name != function.name))
        and sym.value <= section_end
    ]
    if boundaries:
        end = min(boundaries)
        return function.address, end - function.address, True
    return function.address, section_end - function.address, False


def _rows_from_instructions(instructions: Sequence[x86.Instruction]) -> tuple[Row, ...]:
    return tuple((i.address, i.mnemonic, i.operands) for i in instructions)


def _truncate_at_ret(rows: Sequence[Row]) -> tuple[Row, ...]:
    for idx, (_addr, mnemonic, _ops) in enumerate(rows):
        if mnemonic.split()[-1] == "ret":
            return tuple(rows[: idx + 1])
    return tuple(rows)


@functools.lru_cache(maxsize=16)
def _plt_map(image: BinaryImage) -> dict[int, str]:
    return plt_call_targets(image)


class DisassemblyProvider(Protocol):
    def get_disassembly(self, image: BinaryImage, function: ExportedFunction) -> Disassembly:
        ...

    def infer_signature(self, image: BinaryImage, function: ExportedFunction) -> InferredSignature:
        ...


def _signature_from_rows(
    image: BinaryImage, function: ExportedFunction, rows: Sequence[Row]
) -> InferredSignature:
    facts = analyze_instructions(rows, _plt_map(image))
    params = tuple(
        TypeClass.PTR_OPAQUE if i in facts.pointer_params else TypeClass.INT64
        for i in range(facts.arity)
    )
    confidence = Confidence.DERIVED
    if not rows or not facts.saw_terminator:
        confidence = Confidence.DEFAULTED
    return InferredSignature(
        function_name=function.name,
        return_class=TypeClass.INT64 if facts.writes_return_reg else TypeClass.VOID,
        params=params,
        confidence=confidence,
    )


class BuiltinProvider:
    """Deterministic provider backed by the bundled x86-64 decoder."""

    def get_disassembly(self, image: BinaryImage, function: ExportedFunction) -> Disassembly:
        start, length, bounded = function_extent(image, function)
        if length == 0:
            return Disassembly(function.name, (), "", 0)
        raw = image.bytes_at(start, length)
        instructions = x86.decode_range(raw, start)
        rows = _rows_from_instructions(instructions)
        if not bounded:
            rows = _truncate_at_ret(rows)
            instructions = instructions[: len(rows)]
        byte_length = (
            instructions[-1].address + instructions[-1].length - start
            if instructions else 0
        )
        return Disassembly(function.name, rows, render_rows(rows), byte_length)

    def infer_signature(self, image: BinaryImage, function: ExportedFunction) -> InferredSignature:
        disasm = self.get_disassembly(image, function)
        return _signature_from_rows(image, function, disasm.instructions)


class AdapterProvider:
    """Client for an external disassembler process.

    The adapter is spawned once and spoken to over stdin/stdout, one JSON
    object per line. Request::

        {"op": "disassemble", "path": "<file>", "address": N, "length": N}

    Response::

        {"instructions": [{"address": N, "mnemonic": "...", "operands": "..."}]}

    or ``{"error": "..."}``. Access to the child is serialized behind a
    lock, so one provider instance is safe to share across sessions.
    """

    def __init__(self, command: Sequence[str]):
        if not command:
            raise AdapterUnavailableError("empty adapter command")
        self.command = list(command)
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def _ensure_process(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.DEVNULL,
                    text=True,
                    bufsize=1,
                )
            except (OSError, ValueError) as exc:
                raise AdapterUnavailableError(
                    f"cannot spawn adapter {self.command[0]!r}: {exc}"
                ) from exc
        return self._proc

    def _request(self, payload: dict) -> dict:
        with self._lock:
            proc = self._ensure_process()
            try:
                assert proc.stdin is not None and proc.stdout is not None
                proc.stdin.write(json.dumps(payload) + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (OSError, BrokenPipeError) as exc:
                raise AdapterUnavailableError(f"adapter I/O failed: {exc}") from exc
        if not line:
            raise AdapterUnavailableError("adapter closed its output stream")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AdapterUnavailableError(f"adapter sent non-JSON output: {line!r}") from exc
        if "error" in response:
            raise DecodeFailureError(str(response["error"]))
        return response

    def get_disassembly(self, image: BinaryImage, function: ExportedFunction) -> Disassembly:
        start, length, bounded = function_extent(image, function)
        if length == 0:
            return Disassembly(function.name, (), "", 0)
        response = self._request(
            {"op": "disassemble", "path": str(image.path), "address": start,
             "length": length}
        )
        rows: list[Row] = []
        for entry in response.get("instructions", []):
            rows.append((int(entry["address"]), str(entry["mnemonic"]),
                         str(entry.get("operands", ""))))
        rows.sort(key=lambda r: r[0])
        out = tuple(rows)
        if not bounded:
            out = _truncate_at_ret(out)
        byte_length = int(response.get("byte_length", length)) if out else 0
        return Disassembly(function.name, out, render_rows(out), byte_length)

    def infer_signature(self, image: BinaryImage, function: ExportedFunction) -> InferredSignature:
        disasm = self.get_disassembly(image, function)
        return _signature_from_rows(image, function, disasm.instructions)

    def close(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                try:
                    if self._proc.stdin:
                        self._proc.stdin.close()
                    self._proc.terminate()
                    self._proc.wait(timeout=5)
                except (OSError, subprocess.TimeoutExpired):
                    self._proc.kill()
            self._proc = None

    def __enter__(self) -> "AdapterProvider":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
