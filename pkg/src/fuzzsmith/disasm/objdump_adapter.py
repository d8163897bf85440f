"""Reference external disassembler adapter backed by GNU objdump.

Speaks the adapter line protocol on stdin/stdout: each request is one
JSON object (``{"op": "disassemble", "path": ..., "address": N,
"length": N}``) and each response one JSON object with an
``instructions`` array of address/mnemonic/operands records.

Run as a module::

    python -m fuzzsmith.disasm.objdump_adapter

Any disassembler wrapped to honor the same protocol is interchangeable
with this one.
"""

from __future__ import annotations

import json
import re
import subprocess
import sys

_LINE_RE = re.compile(r"^\s*([0-9a-f]+):\t([0-9a-f ]+)\t(.+)$")
_PREFIX_WORDS = {"bnd", "rep", "repz", "repnz", "lock", "data16", "notrack", "cs", "ds"}
_BARE_HEX_RE = re.compile(r"^[0-9a-f]+$")


def _clean_text(text: str) -> str:
    text = text.split("#", 1)[0]
    text = re.sub(r"<[^>]*>", "", text)
    return text.strip()


def _split_mnemonic(text: str) -> tuple[str, str]:
    parts = text.split(None, 1)
    mnemonic = parts[0]
    rest = parts[1] if len(parts) > 1 else ""
    while mnemonic.split()[-1] in _PREFIX_WORDS and rest:
        nxt = rest.split(None, 1)
        mnemonic = f"{mnemonic} {nxt[0]}"
        rest = nxt[1] if len(nxt) > 1 else ""
    return mnemonic, rest.strip()


def _normalize_operands(operands: str) -> str:
    ops = [o.strip() for o in operands.split(",")]
    fixed = []
    for op in ops:
        if _BARE_HEX_RE.match(op):
            fixed.append(f"0x{op}")
        else:
            fixed.append(op)
    return ", ".join(fixed)


def disassemble(path: str, address: int, length: int) -> dict:
    cmd = [
        "objdump", "-d", "-M", "intel", "-w",
        f"--start-address={address:#x}",
        f"--stop-address={address + length:#x}",
        path,
    ]
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=60)
    if proc.returncode != 0:
        return {"error": f"objdump failed: {proc.stderr.strip()[:500]}"}
    instructions = []
    end = address
    for line in proc.stdout.splitlines():
        match = _LINE_RE.match(line)
        if not match:
            continue
        addr = int(match.group(1), 16)
        size = len(match.group(2).split())
        text = _clean_text(match.group(3))
        if not text:  # continuation line of a wrapped instruction
            if instructions and addr == end:
                end += size
            continue
        mnemonic, operands = _split_mnemonic(text)
        instructions.append(
            {"address": addr, "mnemonic": mnemonic,
             "operands": _normalize_operands(operands)}
        )
        end = addr + size
    return {"instructions": instructions, "byte_length": max(0, end - address)}


def serve(stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            if request.get("op") != "disassemble":
                response = {"error": f"unknown op {request.get('op')!r}"}
            else:
                response = disassemble(
                    str(request["path"]), int(request["address"]),
                    int(request["length"]),
                )
        except FileNotFoundError:
            sys.exit(1)  # objdump itself is missing: adapter unavailable
        except Exception as exc:  # malformed request: report, keep serving
            response = {"error": f"{type(exc).__name__}: {exc}"}
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()


if __name__ == "__main__":
    serve()
