"""Test helpers: oracles, scripted chat flows, transcript scanners."""

from __future__ import annotations

import re
import subprocess
from pathlib import Path

from fuzzsmith.backends import ScriptRule, assistant_turn
from fuzzsmith.chat import Role, ToolInvocation, load_transcript
from fuzzsmith.orchestrator import REFUSAL_PREFIX

# Phase-specific prompt markers (wording pinned by the packaged templates).
ANALYSIS_MARK = "Target function: {fn}\n"
GENERATION_MARK = "Function: {fn}\n"
COMPILE_REPAIR_MARK = "The fuzz target for {fn} failed to compile"
RUNTIME_REPAIR_MARK = "The fuzz target for {fn} compiled but failed"
GENERATION_PROMPT_HEAD = "Write a libFuzzer fuzz target"


def readelf_defined_func_exports(library: Path) -> set[str]:
    """Independent export oracle: parse `readelf -W --dyn-syms` text."""
    out = subprocess.run(
        ["readelf", "-W", "--dyn-syms", str(library)],
        check=True,
        capture_output=True,
        text=True,
    ).stdout
    names: set[str] = set()
    row = re.compile(
        r"^\s*\d+:\s+[0-9a-f]+\s+\S+\s+(\w+)\s+(\w+)\s+\S+\s+(\S+)\s+(\S+)"
    )
    for line in out.splitlines():
        m = row.match(line)
        if not m:
            continue
        sym_type, bind, ndx, name = m.groups()
        if sym_type != "FUNC" or bind not in ("GLOBAL", "WEAK") or ndx == "UND":
            continue
        names.add(name.split("@")[0])
    return names


def nm_defined_func_exports(library: Path) -> set[str]:
    """Second oracle: `nm -D --defined-only`, T/t/W/w rows."""
    out = subprocess.run(
        ["nm", "-D", "--defined-only", str(library)],
        check=True,
        capture_output=True,
        text=True,
    ).stdout
    names = set()
    for line in out.splitlines():
        parts = line.split()
        if len(parts) == 3 and parts[1] in ("T", "W", "i"):
            names.add(parts[2])
    return names


def fuzz_driver_source(decl: str, call: str) -> str:
    """A complete, well-behaved fuzz driver as a fenced assistant reply."""
    return f"""```cpp
#include <stdint.h>
#include <stddef.h>
#include <string.h>
{decl}
extern "C" int LLVMFuzzerTestOneInput(const uint8_t *data, size_t size) {{
  {call}
  return 0;
}}
```"""


def int64_driver(fn: str) -> str:
    return fuzz_driver_source(
        f'extern "C" int64_t {fn}(int64_t);',
        f"int64_t v = 0; if (size >= 8) memcpy(&v, data, 8); {fn}(v);",
    )


def broken_driver(fn: str) -> str:
    """Compiles never: references an undeclared identifier."""
    return fuzz_driver_source(
        f'extern "C" int64_t {fn}(int64_t);',
        f"{fn}(this_symbol_does_not_exist);",
    )


def simple_flow_rules(functions: list[str], *, repair_first: bool = False) -> list[ScriptRule]:
    """Per-function scripted conversation.

    Analysis prompt → plain reply (no tools). Generation prompt → either
    a working driver, or (when `repair_first`) a broken driver once and
    the fixed driver in response to the compile-repair prompt.
    """
    rules: list[ScriptRule] = []
    for fn in functions:
        rules.append(
            ScriptRule(
                matcher=ANALYSIS_MARK.format(fn=fn),
                response=f"{fn}: takes one 64-bit integer argument; ready to generate.",
            )
        )
        if repair_first:
            rules.append(
                ScriptRule(
                    matcher=GENERATION_MARK.format(fn=fn),
                    response=broken_driver(fn),
                    once=True,
                )
            )
            rules.append(
                ScriptRule(
                    matcher=COMPILE_REPAIR_MARK.format(fn=fn),
                    response=int64_driver(fn),
                )
            )
        else:
            rules.append(
                ScriptRule(matcher=GENERATION_MARK.format(fn=fn), response=int64_driver(fn))
            )
    return rules


def tool_call_reply(fn: str, tool: str = "get_disassembly", call_id: str = "call-1"):
    return assistant_turn(
        "Inspecting the binary first.",
        (ToolInvocation(id=call_id, tool_name=tool, arguments={"function_name": fn}),),
    )


def generation_prompt_index(turns) -> int | None:
    """Index of the ANALYSIS→GENERATION transition in a turn sequence."""
    for i, turn in enumerate(turns):
        if turn.role is Role.USER and turn.content.startswith(GENERATION_PROMPT_HEAD):
            return i
    return None


def satisfied_analysis_results_after_transition(transcript_path: Path) -> list:
    """TOOL_RESULT turns after the generation prompt that are not refusals."""
    turns = load_transcript(transcript_path)
    start = generation_prompt_index(turns)
    if start is None:
        return []
    return [
        t
        for t in turns[start:]
        if t.role is Role.TOOL_RESULT and not t.content.startswith(REFUSAL_PREFIX)
    ]


# ---------------------------------------------------------------------------
# Hand-packed minimal ELF64 images for loader edge cases

import struct

_EHDR = struct.Struct("<HHIQQQIHHHHHH")
_SHDR = struct.Struct("<IIQQQQIIQQ")
_SYM = struct.Struct("<IBBHQQ")

SHT_PROGBITS = 1
SHT_STRTAB = 3
SHT_DYNSYM = 11
SHF_ALLOC = 0x2
SHF_EXECINSTR = 0x4


def make_min_elf(
    symbols: list[tuple[str, int, int, int, int]],
    *,
    text_addr: int = 0x1000,
    text_size: int = 0x100,
) -> bytes:
    """Minimal ELF64 shared object with a .text and a .dynsym.

    `symbols` rows are (name, value, binding, sym_type, shndx); shndx 1 is
    .text, 0 is UNDEF. A leading null symbol is added automatically.
    """
    dynstr = bytearray(b"\x00")
    name_off = {}
    for name, *_ in symbols:
        if name and name not in name_off:
            name_off[name] = len(dynstr)
            dynstr += name.encode() + b"\x00"

    sym_blob = bytearray(_SYM.pack(0, 0, 0, 0, 0, 0))
    for name, value, binding, sym_type, shndx in symbols:
        info = (binding << 4) | sym_type
        sym_blob += _SYM.pack(name_off.get(name, 0), info, 0, shndx, value, 0)

    text = b"\xc3" * text_size  # ret-filled
    shstr = b"\x00.text\x00.dynsym\x00.dynstr\x00.shstrtab\x00"
    sh_name = {".text": 1, ".dynsym": 7, ".dynstr": 15, ".shstrtab": 23}

    off = 64
    text_off = off
    off += len(text)
    dynsym_off = off
    off += len(sym_blob)
    dynstr_off = off
    off += len(dynstr)
    shstr_off = off
    off += len(shstr)
    shdr_off = off

    def shdr(name, sh_type, flags, addr, offset, size, link=0, entsize=0):
        return _SHDR.pack(sh_name.get(name, 0), sh_type, flags, addr, offset, size, link, 0, 1, entsize)

    headers = b"".join(
        [
            _SHDR.pack(0, 0, 0, 0, 0, 0, 0, 0, 0, 0),
            shdr(".text", SHT_PROGBITS, SHF_ALLOC | SHF_EXECINSTR, text_addr, text_off, len(text)),
            shdr(".dynsym", SHT_DYNSYM, SHF_ALLOC, 0, dynsym_off, len(sym_blob), link=3, entsize=_SYM.size),
            shdr(".dynstr", SHT_STRTAB, SHF_ALLOC, 0, dynstr_off, len(dynstr)),
            shdr(".shstrtab", SHT_STRTAB, 0, 0, shstr_off, len(shstr)),
        ]
    )

    ehdr = b"\x7fELF" + bytes([2, 1, 1, 0]) + b"\x00" * 8
    ehdr += _EHDR.pack(3, 0x3E, 1, 0, 0, shdr_off, 0, 64, 0, 0, _SHDR.size, 5, 4)
    return bytes(ehdr + text + sym_blob + dynstr + shstr + headers)


STB_GLOBAL = 1
STB_WEAK = 2
STB_LOCAL = 0
STT_FUNC = 2
STT_OBJECT = 1


def all_transcripts_under(root: Path) -> list[Path]:
    found = []
    for path in sorted(root.rglob("*.jsonl")):
        try:
            head = path.open(encoding="utf-8").readline()
        except OSError:
            continue
        if '"fuzzsmith-transcript"' in head:
            found.append(path)
    return found
