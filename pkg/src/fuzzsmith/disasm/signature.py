"""Heuristic signature inference over textual x86-64 disassembly.

Works on (address, mnemonic, operands) triples so that both the built-in
decoder and any external adapter feed the same rules. The algorithm has
three parts:

* Arity — the System V integer argument registers (rdi, rsi, rdx, rcx,
  r8, r9) read while still *pristine* (never written inside the function)
  along the straight-line prefix up to the first unconditional transfer.
  At low optimization levels, compilers spill every register argument in
  the prologue, so the prefix sees the full arity.
* Pointer evidence — taint from each argument register is tracked through
  register-to-register moves and frame-slot spills; a parameter is
  pointer-like if a tainted register is used as a memory base, passed to
  a known string/memory routine in a pointer position, or called through.
* Return class — a function returns a value iff some instruction
  explicitly writes the return register before the first `ret`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .x86 import REG16, REG32, REG64, REG8_REX

ARG_REGS = ("rdi", "rsi", "rdx", "rcx", "r8", "r9")
CALLER_SAVED = ("rax", "rcx", "rdx", "rsi", "rdi", "r8", "r9", "r10", "r11")

# Imported routines whose listed (0-based) argument positions take pointers;
# passing a tainted value there is pointer evidence for the original param.
KNOWN_POINTER_ROUTINES: dict[str, tuple[int, ...]] = {
    "memcpy": (0, 1), "memmove": (0, 1), "memset": (0,), "memcmp": (0, 1),
    "memchr": (0,), "bcopy": (0, 1), "bzero": (0,),
    "strcpy": (0, 1), "strncpy": (0, 1), "strcat": (0, 1), "strncat": (0, 1),
    "strlen": (0,), "strnlen": (0,), "strcmp": (0, 1), "strncmp": (0, 1),
    "strcasecmp": (0, 1), "strchr": (0,), "strrchr": (0,), "strstr": (0, 1),
    "strdup": (0,), "strndup": (0,), "strtok": (0, 1), "strtol": (0, 1),
    "strtoul": (0, 1), "strtod": (0, 1), "atoi": (0,), "atol": (0,),
    "sprintf": (0, 1), "snprintf": (0, 2), "sscanf": (0, 1),
    "free": (0,), "realloc": (0,), "fopen": (0, 1), "fread": (0, 3),
    "fwrite": (0, 3), "fputs": (0, 1), "fgets": (0, 2), "puts": (0,),
    "__memcpy_chk": (0, 1), "__memset_chk": (0,), "__strcpy_chk": (0, 1),
    "__strcat_chk": (0, 1), "__strncpy_chk": (0, 1), "__strncat_chk": (0, 1),
    "__sprintf_chk": (0, 3), "__snprintf_chk": (0, 4),
}

_CANON: dict[str, str] = {}
for _i, _name in enumerate(REG64):
    for _table in (REG64, REG32, REG16, REG8_REX):
        _CANON[_table[_i]] = _name
for _high, _parent in (("ah", "rax"), ("ch", "rcx"), ("dh", "rdx"), ("bh", "rbx")):
    _CANON[_high] = _parent

_TAG_RE = re.compile(r"\b(?:byte|word|dword|qword|xmmword|ymmword|tbyte|fword)\s+ptr\b\s*",
                     re.IGNORECASE)
_MEM_RE = re.compile(r"(?:([a-z]{2}):)?\[([^\]]*)\]")
_SEG_ABS_RE = re.compile(r"^([a-z]{2}):(0x[0-9a-f]+|\d+)$")
_PIECE_RE = re.compile(r"([+-]?)([a-z0-9*]+)")
_XMM_RE = re.compile(r"^(?:xmm|ymm)\d+$")

_MOV_LIKE = frozenset({"mov", "movabs", "movzx", "movsx", "movsxd"})
_RMW = frozenset({"add", "sub", "adc", "sbb", "and", "or", "xor", "shl", "shr",
                  "sal", "sar", "rol", "ror", "rcl", "rcr", "inc", "dec",
                  "neg", "not", "xadd", "xchg", "cmpxchg", "bts", "btr", "btc"})
_READ_ONLY = frozenset({"cmp", "test", "push", "ucomiss", "ucomisd",
                        "comiss", "comisd", "bt"})
_NO_EFFECT = frozenset({"nop", "endbr64", "endbr32", "leave", "ret", "int3",
                        "hlt", "ud2", "pause", "cpuid", "syscall", "cdq",
                        "cqo", "cdqe", "cwde", "lfence", "mfence", "sfence"})
_TERMINATORS = frozenset({"ret", "jmp", "hlt", "ud2", "int3"})
_GRP3_MULDIV = frozenset({"mul", "imul", "div", "idiv"})
# Arithmetic that preserves pointer-ness: indexing (`add rax, rdx`),
# offsetting, alignment masks, and increments keep the base's taint.
_PTR_ARITH = frozenset({"add", "sub", "and", "inc", "dec"})

# Implicit register operands of the string instructions, by mnemonic stem.
_STRING_IMPLICIT: dict[str, tuple[str, ...]] = {
    "movs": ("rsi", "rdi"), "cmps": ("rsi", "rdi"), "stos": ("rdi",),
    "lods": ("rsi",), "scas": ("rdi",),
}


@dataclass(frozen=True)
class ParsedOp:
    kind: str  # "reg" | "mem" | "imm" | "xmm" | "other"
    text: str
    reg: str | None = None  # canonical 64-bit name when kind == "reg"
    base: str | None = None  # canonical, kind == "mem"
    index: str | None = None
    disp: int = 0
    seg: str | None = None
    value: int | None = None  # kind == "imm"

    def stack_key(self) -> tuple | None:
        if self.kind == "mem" and self.index is None and self.base in ("rbp", "rsp"):
            return ("stack", self.base, self.disp)
        return None


@dataclass(frozen=True)
class InferenceFacts:
    arity: int
    pointer_params: frozenset[int]
    writes_return_reg: bool
    saw_terminator: bool


def split_operands(text: str) -> list[str]:
    parts: list[str] = []
    depth = 0
    current = ""
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(current.strip())
            current = ""
        else:
            current += ch
    if current.strip():
        parts.append(current.strip())
    return parts


def parse_operand(text: str) -> ParsedOp:
    t = _TAG_RE.sub("", text.strip().lower()).strip()
    seg_abs = _SEG_ABS_RE.match(t)
    if seg_abs:
        return ParsedOp(kind="mem", text=text, seg=seg_abs.group(1),
                        disp=int(seg_abs.group(2), 0))
    mem = _MEM_RE.search(t)
    if mem:
        return _parse_mem(text, mem.group(1), mem.group(2))
    if t in _CANON:
        return ParsedOp(kind="reg", text=text, reg=_CANON[t])
    if _XMM_RE.match(t):
        return ParsedOp(kind="xmm", text=text)
    try:
        return ParsedOp(kind="imm", text=text, value=int(t, 0))
    except ValueError:
        return ParsedOp(kind="other", text=text)


def _parse_mem(original: str, seg: str | None, inner: str) -> ParsedOp:
    base = index = None
    disp = 0
    for sign, token in _PIECE_RE.findall(inner.replace(" ", "")):
        if "*" in token:
            reg_part = token.split("*", 1)[0]
            index = _CANON.get(reg_part, reg_part or None)
        elif token in _CANON:
            if base is None:
                base = _CANON[token]
            else:
                index = _CANON[token]
        elif token == "rip":
            base = "rip"
        else:
            try:
                value = int(token, 0)
            except ValueError:
                continue
            disp = -value if sign == "-" else value
    return ParsedOp(kind="mem", text=original, base=base, index=index,
                    disp=disp, seg=seg)


def _core(mnemonic: str) -> str:
    return mnemonic.split()[-1]


def _string_stem(core: str) -> str | None:
    if len(core) == 5 and core[-1] in "bwdq":
        stem = core[:4]
        if stem in _STRING_IMPLICIT:
            return stem
    return None


@dataclass(frozen=True)
class Effects:
    reads: tuple[str, ...]
    writes: tuple[str, ...]
    write_keys: tuple[tuple | str, ...]
    mov_dst: tuple | str | None
    mov_src: ParsedOp | None
    derefs: tuple[ParsedOp, ...]


def _taint_key(op: ParsedOp) -> tuple | str | None:
    if op.kind == "reg":
        return op.reg
    return op.stack_key()


def _address_reads(op: ParsedOp) -> list[str]:
    regs = []
    for r in (op.base, op.index):
        if r and r != "rip":
            regs.append(r)
    return regs


def instruction_effects(mnemonic: str, ops: Sequence[ParsedOp]) -> Effects:
    """Registers read/written and memory dereferences of one instruction."""
    core = _core(mnemonic)
    reads: list[str] = []
    writes: list[str] = []
    write_keys: list[tuple | str] = []
    derefs: list[ParsedOp] = []
    mov_dst: tuple | str | None = None
    mov_src: ParsedOp | None = None

    def read_op(op: ParsedOp) -> None:
        if op.kind == "reg":
            reads.append(op.reg)
        reads.extend(_address_reads(op))

    def write_op(op: ParsedOp) -> None:
        if op.kind == "reg":
            writes.append(op.reg)
            write_keys.append(op.reg)
        else:
            key = op.stack_key()
            if key:
                write_keys.append(key)
        reads.extend(_address_reads(op))

    if core.startswith("nop") or core in _NO_EFFECT and core != "ret":
        if core == "cdqe" or core == "cwde":
            return Effects(("rax",), ("rax",), (), None, None, ())
        if core in ("cdq", "cqo"):
            return Effects(("rax",), ("rdx",), ("rdx",), None, None, ())
        return Effects((), (), (), None, None, ())
    if core == "ret":
        return Effects((), (), (), None, None, ())

    stem = _string_stem(core)
    if stem and not ops:
        implicit = _STRING_IMPLICIT[stem]
        return Effects(tuple(implicit), (), (), None, None,
                       tuple(ParsedOp(kind="mem", text=r, base=r) for r in implicit))

    for op in ops:
        if op.kind == "mem" and core != "lea" and not core.startswith("nop"):
            if op.seg not in ("fs", "gs"):
                derefs.append(op)

    if core in _MOV_LIKE and len(ops) == 2:
        write_op(ops[0])
        read_op(ops[1])
        mov_dst = _taint_key(ops[0])
        mov_src = ops[1]
    elif core in ("call", "jmp"):
        if ops:
            read_op(ops[0])
    elif core in _READ_ONLY:
        for op in ops:
            read_op(op)
    elif core == "pop" or core.startswith("set"):
        if ops:
            write_op(ops[0])
    elif core.startswith("cmov"):
        write_op(ops[0])
        read_op(ops[1])
    elif core == "lea":
        if ops:
            writes.append(ops[0].reg) if ops[0].kind == "reg" else None
            if ops[0].kind == "reg":
                write_keys.append(ops[0].reg)
            for op in ops[1:]:
                reads.extend(_address_reads(op))
    elif core in _GRP3_MULDIV and len(ops) == 1:
        read_op(ops[0])
        reads.extend(("rax", "rdx") if core in ("div", "idiv") else ("rax",))
        writes.extend(("rax", "rdx"))
        write_keys.extend(("rax", "rdx"))
    elif core in _RMW and len(ops) >= 1:
        if (core == "xor" and len(ops) == 2 and ops[0].kind == "reg"
                and ops[1].kind == "reg" and ops[0].reg == ops[1].reg):
            write_op(ops[0])  # zeroing idiom: no real read
        else:
            if ops[0].kind == "reg":
                reads.append(ops[0].reg)
            write_op(ops[0])
            for op in ops[1:]:
                read_op(op)
            if core in ("xchg", "xadd") and len(ops) == 2:
                write_op(ops[1])
    elif core == "imul" and len(ops) == 3:
        write_op(ops[0])
        read_op(ops[1])
    elif core == "imul" and len(ops) == 2:
        if ops[0].kind == "reg":
            reads.append(ops[0].reg)
        write_op(ops[0])
        read_op(ops[1])
    else:
        # Unrecognized mnemonic: assume dst-first convention, read the rest.
        if ops:
            write_op(ops[0])
            for op in ops[1:]:
                read_op(op)
    return Effects(tuple(reads), tuple(writes), tuple(write_keys),
                   mov_dst, mov_src, tuple(derefs))


def analyze_instructions(
    rows: Iterable[tuple[int, str, str]],
    plt_names: dict[int, str] | None = None,
) -> InferenceFacts:
    """Run arity, pointer-evidence, and return-class analysis."""
    plt_names = plt_names or {}
    parsed: list[tuple[str, str, list[ParsedOp]]] = []
    for _addr, mnemonic, operand_text in rows:
        ops = [parse_operand(o) for o in split_operands(operand_text)]
        parsed.append((mnemonic, _core(mnemonic), ops))

    # Pass A: arity over the straight-line prefix.
    pristine = set(ARG_REGS)
    used: set[int] = set()
    saw_terminator = False
    for mnemonic, core, ops in parsed:
        effects = instruction_effects(mnemonic, ops)
        for reg in effects.reads:
            if reg in pristine:
                used.add(ARG_REGS.index(reg))
        if core == "call" and ops and ops[0].kind == "reg" and ops[0].reg in pristine:
            used.add(ARG_REGS.index(ops[0].reg))
        pristine.difference_update(effects.writes)
        if core == "call":
            pristine.difference_update(CALLER_SAVED)
        if core in _TERMINATORS:
            saw_terminator = True
            break
    arity = (max(used) + 1) if used else 0

    # Pass B: taint walk over the full body for pointer/return evidence.
    taint: dict[tuple | str, frozenset[int]] = {
        reg: frozenset({i}) for i, reg in enumerate(ARG_REGS)
    }
    pointer_params: set[int] = set()
    rax_written = False
    rax_at_first_ret: bool | None = None

    def taint_of(op: ParsedOp) -> frozenset[int] | None:
        key = _taint_key(op)
        return taint.get(key) if key is not None else None

    for mnemonic, core, ops in parsed:
        effects = instruction_effects(mnemonic, ops)
        for mem_op in effects.derefs:
            for reg in (mem_op.base, mem_op.index):
                if reg and reg != "rip":
                    pointer_params.update(taint.get(reg, ()))
        if core in ("call", "jmp") and ops:
            target = ops[0]
            if target.kind == "reg":
                pointer_params.update(taint.get(target.reg, ()))
            elif target.kind == "imm" and core == "call":
                name = plt_names.get(target.value, "")
                positions = KNOWN_POINTER_ROUTINES.get(name.split("@")[0])
                if positions:
                    for pos in positions:
                        if pos < len(ARG_REGS):
                            pointer_params.update(taint.get(ARG_REGS[pos], ()))
        if effects.mov_dst is not None:
            src_taint = taint_of(effects.mov_src) if effects.mov_src else None
            if src_taint:
                taint[effects.mov_dst] = src_taint
            else:
                taint.pop(effects.mov_dst, None)
        elif core in _PTR_ARITH and ops and _taint_key(ops[0]) is not None:
            key = _taint_key(ops[0])
            merged = set(taint.get(key, ()))
            for src in ops[1:]:
                merged.update(taint_of(src) or ())
            if merged:
                taint[key] = frozenset(merged)
            else:
                taint.pop(key, None)
        elif core == "lea" and ops and ops[0].kind == "reg":
            merged = set()
            for src in ops[1:]:
                for reg in (src.base, src.index):
                    if reg and reg != "rip":
                        merged.update(taint.get(reg, ()))
            if merged:
                taint[ops[0].reg] = frozenset(merged)
            else:
                taint.pop(ops[0].reg, None)
        else:
            for key in effects.write_keys:
                taint.pop(key, None)
        if core == "call":
            for reg in CALLER_SAVED:
                taint.pop(reg, None)
        if "rax" in effects.writes:
            rax_written = True
        if core == "ret" and rax_at_first_ret is None:
            rax_at_first_ret = rax_written

    writes_return = rax_at_first_ret if rax_at_first_ret is not None else rax_written
    pointer_params.intersection_update(range(arity))
    return InferenceFacts(
        arity=arity,
        pointer_params=frozenset(pointer_params),
        writes_return_reg=writes_return,
        saw_terminator=saw_terminator,
    )
