"""Linear-sweep x86-64 instruction decoder.

Covers the instruction mix produced by mainstream compilers at low
optimization levels for 64-bit System V code: the one-byte ALU/mov/stack
groups, the 0x0F two-byte page (jcc, setcc, cmovcc, movzx/movsx, the
scalar SSE moves and conversions), REX prefixes, ModRM/SIB addressing,
RIP-relative operands, segment overrides (the stack-protector's
``fs:0x28`` load), ``endbr64``, and BND-prefixed branches as emitted into
PLT stubs.

Rendering is Intel syntax, lowercase, with objdump-style size tags
("qword ptr [rbp-0x8]"). The decoder is deliberately not exhaustive:
an opcode outside the supported set raises DecodeFailureError rather
than guessing.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import DecodeFailureError

REG64 = "rax rcx rdx rbx rsp rbp rsi rdi r8 r9 r10 r11 r12 r13 r14 r15".split()
REG32 = "eax ecx edx ebx esp ebp esi edi r8d r9d r10d r11d r12d r13d r14d r15d".split()
REG16 = "ax cx dx bx sp bp si di r8w r9w r10w r11w r12w r13w r14w r15w".split()
REG8_REX = "al cl dl bl spl bpl sil dil r8b r9b r10b r11b r12b r13b r14b r15b".split()
REG8_LEGACY = "al cl dl bl ah ch dh bh".split()
XMM = [f"xmm{i}" for i in range(16)]

_SEG_NAMES = {0x26: "es", 0x2E: "cs", 0x36: "ss", 0x3E: "ds", 0x64: "fs", 0x65: "gs"}
_ALU = {0x00: "add", 0x08: "or", 0x10: "adc", 0x18: "sbb",
        0x20: "and", 0x28: "sub", 0x30: "xor", 0x38: "cmp"}
_GRP1 = ["add", "or", "adc", "sbb", "and", "sub", "xor", "cmp"]
_GRP2 = ["rol", "ror", "rcl", "rcr", "shl", "shr", "shl", "sar"]
_GRP3 = ["test", "test", "not", "neg", "mul", "imul", "div", "idiv"]
_CC = ["o", "no", "b", "ae", "e", "ne", "be", "a",
       "s", "ns", "p", "np", "l", "ge", "le", "g"]

_SIZE_TAG = {8: "byte ptr", 16: "word ptr", 32: "dword ptr",
             64: "qword ptr", 128: "xmmword ptr"}


@dataclass(frozen=True)
class Instruction:
    address: int
    length: int
    mnemonic: str
    operands: str = ""

    def render(self) -> str:
        if self.operands:
            return f"{self.address:#x}:\t{self.mnemonic}\t{self.operands}"
        return f"{self.address:#x}:\t{self.mnemonic}"


def render_text(instructions) -> str:
    return "\n".join(ins.render() for ins in instructions)


def parse_text(text: str) -> list[tuple[int, str, str]]:
    """Inverse of render_text over (address, mnemonic, operands) triples."""
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        addr_part, _, rest = line.partition(":\t")
        mnemonic, _, operands = rest.partition("\t")
        out.append((int(addr_part, 16), mnemonic, operands))
    return out


def _sx(value: int, bits: int) -> int:
    mask = 1 << (bits - 1)
    return (value ^ mask) - mask


def _hex_unsigned(value: int, bits: int) -> str:
    return hex(value & ((1 << bits) - 1))


def _reg_name(num: int, size: int, rex_present: bool) -> str:
    if size == 64:
        return REG64[num]
    if size == 32:
        return REG32[num]
    if size == 16:
        return REG16[num]
    if size == 8:
        return REG8_REX[num] if rex_present else REG8_LEGACY[num]
    raise DecodeFailureError(f"bad register size {size}")


class _Decoder:
    """Decodes one instruction from a byte buffer at a virtual address."""

    def __init__(self, data: bytes, pos: int, address: int):
        self.data = data
        self.start = pos
        self.pos = pos
        self.address = address
        self.rex = 0
        self.rex_present = False
        self.seg: str | None = None
        self.osz16 = False
        self.f2 = False
        self.f3 = False
        self.lock = False

    # -- byte readers ------------------------------------------------------
    def u8(self) -> int:
        if self.pos >= len(self.data):
            raise DecodeFailureError(f"truncated instruction at {self.address:#x}")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def peek(self) -> int:
        if self.pos >= len(self.data):
            raise DecodeFailureError(f"truncated instruction at {self.address:#x}")
        return self.data[self.pos]

    def u16(self) -> int:
        return self.u8() | self.u8() << 8

    def u32(self) -> int:
        return self.u16() | self.u16() << 16

    def u64(self) -> int:
        return self.u32() | self.u32() << 32

    def i8(self) -> int:
        return _sx(self.u8(), 8)

    def i32(self) -> int:
        return _sx(self.u32(), 32)

    # -- ModRM / SIB -------------------------------------------------------
    def modrm(self) -> tuple[int, int, int]:
        b = self.u8()
        return b >> 6, (b >> 3) & 7, b & 7

    def _mem_operand(self, mod: int, rm: int) -> str:
        """Bracketed memory reference without a size tag."""
        base = index = None
        scale = 1
        disp = 0
        disp_explicit = False
        riprel = False
        if rm == 4:
            sib = self.u8()
            scale = 1 << (sib >> 6)
            idx = (sib >> 3) & 7 | (0x8 if self.rex & 0x2 else 0)
            if idx != 4:  # index 100 without REX.X means "no index"
                index = REG64[idx]
            base_bits = sib & 7
            if base_bits == 5 and mod == 0:
                disp = self.i32()
                disp_explicit = True
            else:
                base = REG64[base_bits | (0x8 if self.rex & 0x1 else 0)]
        elif rm == 5 and mod == 0:
            riprel = True
            disp = self.i32()
            disp_explicit = True
        else:
            base = REG64[rm | (0x8 if self.rex & 0x1 else 0)]
        if mod == 1:
            disp = self.i8()
            disp_explicit = True
        elif mod == 2:
            disp = self.i32()
            disp_explicit = True

        if riprel:
            inner = f"rip{'+' if disp >= 0 else '-'}{abs(disp):#x}"
        else:
            parts = []
            if base:
                parts.append(base)
            if index:
                parts.append(f"{index}*{scale}")
            inner = "+".join(parts)
            if disp_explicit or not inner:
                if inner:
                    inner += f"{'+' if disp >= 0 else '-'}{abs(disp):#x}"
                else:
                    return (f"{self.seg}:{disp & 0xFFFFFFFF:#x}" if self.seg
                            else f"[{disp & 0xFFFFFFFF:#x}]")
        ref = f"[{inner}]"
        return f"{self.seg}:{ref}" if self.seg else ref

    def rm_operand(self, mod: int, rm: int, size: int, xmm: bool = False) -> str:
        if mod == 3:
            num = rm | (0x8 if self.rex & 0x1 else 0)
            return XMM[num] if xmm else _reg_name(num, size, self.rex_present)
        mem = self._mem_operand(mod, rm)
        tag = _SIZE_TAG.get(size)
        return f"{tag} {mem}" if tag else mem

    def reg_operand(self, reg: int, size: int, xmm: bool = False) -> str:
        num = reg | (0x8 if self.rex & 0x4 else 0)
        return XMM[num] if xmm else _reg_name(num, size, self.rex_present)

    # -- helpers -----------------------------------------------------------
    @property
    def opsize(self) -> int:
        if self.rex & 0x8:
            return 64
        return 16 if self.osz16 else 32

    def rel_target(self, bits: int) -> int:
        rel = self.i8() if bits == 8 else self.i32()
        return self.address + (self.pos - self.start) + rel

    def done(self, mnemonic: str, operands: str = "") -> Instruction:
        if self.f2 and (mnemonic.startswith(("jmp", "call", "ret"))
                        or mnemonic[0] == "j" and mnemonic[1:] in _CC):
            mnemonic = f"bnd {mnemonic}"
        if self.lock:
            mnemonic = f"lock {mnemonic}"
        return Instruction(self.address, self.pos - self.start, mnemonic, operands)

    # -- main dispatch -----------------------------------------------------
    def decode(self) -> Instruction:
        while True:
            b = self.peek()
            if b in (0x66,):
                self.osz16 = True
            elif b == 0x67:
                pass  # address-size override: consumed, unused here
            elif b == 0xF0:
                self.lock = True
            elif b == 0xF2:
                self.f2 = True
            elif b == 0xF3:
                self.f3 = True
            elif b in _SEG_NAMES:
                self.seg = _SEG_NAMES[b]
            elif 0x40 <= b <= 0x4F:
                self.rex = b & 0xF
                self.rex_present = True
                self.u8()
                break
            else:
                break
            self.u8()
        op = self.u8()
        return self._opcode(op)

    def _opcode(self, op: int) -> Instruction:
        if op == 0x0F:
            return self._opcode_0f(self.u8())

        alu = _ALU.get(op & 0xF8)
        if alu is not None and (op & 7) <= 5:
            return self._alu_form(alu, op & 7)

        if 0x50 <= op <= 0x57:
            return self.done("push", REG64[(op & 7) | (0x8 if self.rex & 1 else 0)])
        if 0x58 <= op <= 0x5F:
            return self.done("pop", REG64[(op & 7) | (0x8 if self.rex & 1 else 0)])
        if op == 0x63:
            mod, reg, rm = self.modrm()
            dst = self.reg_operand(reg, self.opsize)
            src = self.rm_operand(mod, rm, 32)
            return self.done("movsxd", f"{dst}, {src}")
        if op == 0x68:
            return self.done("push", _hex_unsigned(self.i32(), 64))
        if op == 0x6A:
            return self.done("push", _hex_unsigned(self.i8(), 64))
        if op in (0x69, 0x6B):
            mod, reg, rm = self.modrm()
            dst = self.reg_operand(reg, self.opsize)
            src = self.rm_operand(mod, rm, self.opsize)
            imm = self.i8() if op == 0x6B else self.i32()
            return self.done("imul", f"{dst}, {src}, {_hex_unsigned(imm, self.opsize)}")
        if 0x70 <= op <= 0x7F:
            return self.done(f"j{_CC[op & 0xF]}", f"{self.rel_target(8):#x}")
        if op in (0x80, 0x81, 0x83):
            size = 8 if op == 0x80 else self.opsize
            mod, reg, rm = self.modrm()
            dst = self.rm_operand(mod, rm, size)
            imm = self.i8() if op != 0x81 else (
                _sx(self.u16(), 16) if size == 16 else self.i32())
            return self.done(_GRP1[reg], f"{dst}, {_hex_unsigned(imm, size)}")
        if op in (0x84, 0x85):
            return self._rm_reg_form("test", 8 if op == 0x84 else self.opsize)
        if op in (0x86, 0x87):
            return self._rm_reg_form("xchg", 8 if op == 0x86 else self.opsize)
        if op in (0x88, 0x89):
            return self._rm_reg_form("mov", 8 if op == 0x88 else self.opsize)
        if op in (0x8A, 0x8B):
            return self._reg_rm_form("mov", 8 if op == 0x8A else self.opsize)
        if op == 0x8D:
            mod, reg, rm = self.modrm()
            if mod == 3:
                raise DecodeFailureError(f"lea with register operand at {self.address:#x}")
            return self.done("lea", f"{self.reg_operand(reg, self.opsize)}, "
                                    f"{self._mem_operand(mod, rm)}")
        if op == 0x8F:
            mod, _reg, rm = self.modrm()
            return self.done("pop", self.rm_operand(mod, rm, 64))
        if op == 0x90:
            return self.done("pause" if self.f3 else "nop")
        if op == 0x98:
            return self.done("cdqe" if self.rex & 8 else "cwde")
        if op == 0x99:
            return self.done("cqo" if self.rex & 8 else "cdq")
        if op in (0xA8, 0xA9):
            size = 8 if op == 0xA8 else self.opsize
            imm = self.i8() if op == 0xA8 else self.i32()
            acc = _reg_name(0, size, self.rex_present)
            return self.done("test", f"{acc}, {_hex_unsigned(imm, size)}")
        if op in (0xA4, 0xA5, 0xA6, 0xA7, 0xAA, 0xAB, 0xAC, 0xAD, 0xAE, 0xAF):
            return self._string_op(op)
        if 0xB0 <= op <= 0xB7:
            num = (op & 7) | (0x8 if self.rex & 1 else 0)
            return self.done("mov", f"{_reg_name(num, 8, self.rex_present)}, "
                                    f"{self.u8():#x}")
        if 0xB8 <= op <= 0xBF:
            num = (op & 7) | (0x8 if self.rex & 1 else 0)
            if self.rex & 8:
                return self.done("movabs", f"{REG64[num]}, {self.u64():#x}")
            size = self.opsize
            imm = self.u16() if size == 16 else self.u32()
            return self.done("mov", f"{_reg_name(num, size, self.rex_present)}, "
                                    f"{imm:#x}")
        if op in (0xC0, 0xC1, 0xD0, 0xD1, 0xD2, 0xD3):
            return self._shift_form(op)
        if op == 0xC2:
            return self.done("ret", f"{self.u16():#x}")
        if op == 0xC3:
            return self.done("ret")
        if op in (0xC6, 0xC7):
            size = 8 if op == 0xC6 else self.opsize
            mod, _reg, rm = self.modrm()
            dst = self.rm_operand(mod, rm, size)
            if op == 0xC6:
                imm = self.u8()
            elif size == 16:
                imm = self.u16()
            else:
                imm = self.i32()
            return self.done("mov", f"{dst}, {_hex_unsigned(imm, size)}")
        if op == 0xC9:
            return self.done("leave")
        if op == 0xCC:
            return self.done("int3")
        if op == 0xE8:
            return self.done("call", f"{self.rel_target(32):#x}")
        if op == 0xE9:
            return self.done("jmp", f"{self.rel_target(32):#x}")
        if op == 0xEB:
            return self.done("jmp", f"{self.rel_target(8):#x}")
        if op == 0xF4:
            return self.done("hlt")
        if op in (0xF6, 0xF7):
            return self._grp3_form(op)
        if op == 0xFE:
            mod, reg, rm = self.modrm()
            if reg > 1:
                raise DecodeFailureError(f"bad FE group reg={reg} at {self.address:#x}")
            return self.done("inc" if reg == 0 else "dec", self.rm_operand(mod, rm, 8))
        if op == 0xFF:
            return self._grp5_form()
        raise DecodeFailureError(f"unsupported opcode {op:#04x} at {self.address:#x}")

    # -- opcode families ----------------------------------------------------
    def _alu_form(self, mnemonic: str, form: int) -> Instruction:
        if form == 4:
            return self.done(mnemonic, f"al, {self.u8():#x}")
        if form == 5:
            size = self.opsize
            imm = _sx(self.u16(), 16) if size == 16 else self.i32()
            acc = _reg_name(0, size, self.rex_present)
            return self.done(mnemonic, f"{acc}, {_hex_unsigned(imm, size)}")
        size = 8 if form in (0, 2) else self.opsize
        if form in (0, 1):
            return self._rm_reg_form(mnemonic, size)
        return self._reg_rm_form(mnemonic, size)

    def _rm_reg_form(self, mnemonic: str, size: int) -> Instruction:
        mod, reg, rm = self.modrm()
        return self.done(mnemonic, f"{self.rm_operand(mod, rm, size)}, "
                                   f"{self.reg_operand(reg, size)}")

    def _reg_rm_form(self, mnemonic: str, size: int) -> Instruction:
        mod, reg, rm = self.modrm()
        return self.done(mnemonic, f"{self.reg_operand(reg, size)}, "
                                   f"{self.rm_operand(mod, rm, size)}")

    def _shift_form(self, op: int) -> Instruction:
        size = 8 if op in (0xC0, 0xD0, 0xD2) else self.opsize
        mod, reg, rm = self.modrm()
        dst = self.rm_operand(mod, rm, size)
        if op in (0xC0, 0xC1):
            count = f"{self.u8():#x}"
        elif op in (0xD0, 0xD1):
            count = "1"
        else:
            count = "cl"
        return self.done(_GRP2[reg], f"{dst}, {count}")

    def _grp3_form(self, op: int) -> Instruction:
        size = 8 if op == 0xF6 else self.opsize
        mod, reg, rm = self.modrm()
        operand = self.rm_operand(mod, rm, size)
        if reg in (0, 1):
            if op == 0xF6:
                imm = self.u8()
            elif size == 16:
                imm = self.u16()
            else:
                imm = self.i32()
            return self.done("test", f"{operand}, {_hex_unsigned(imm, size)}")
        return self.done(_GRP3[reg], operand)

    def _grp5_form(self) -> Instruction:
        mod, reg, rm = self.modrm()
        if reg in (0, 1):
            return self.done("inc" if reg == 0 else "dec",
                             self.rm_operand(mod, rm, self.opsize))
        if reg in (2, 3):
            return self.done("call", self.rm_operand(mod, rm, 64))
        if reg in (4, 5):
            return self.done("jmp", self.rm_operand(mod, rm, 64))
        if reg == 6:
            return self.done("push", self.rm_operand(mod, rm, 64))
        raise DecodeFailureError(f"bad FF group reg={reg} at {self.address:#x}")

    def _string_op(self, op: int) -> Instruction:
        base = {0xA4: "movs", 0xA6: "cmps", 0xAA: "stos",
                0xAC: "lods", 0xAE: "scas"}.get(op & 0xFE)
        if base is None:
            raise DecodeFailureError(f"unsupported opcode {op:#04x} at {self.address:#x}")
        if op & 1 == 0:
            suffix = "b"
        elif self.rex & 8:
            suffix = "q"
        else:
            suffix = "w" if self.osz16 else "d"
        rep = ""
        if self.f3:
            rep = "repz " if base in ("cmps", "scas") else "rep "
        elif self.f2:
            rep = "repnz "
        return self.done(f"{rep}{base}{suffix}")

    # -- two-byte page -------------------------------------------------------
    def _opcode_0f(self, op: int) -> Instruction:
        if op == 0x05:
            return self.done("syscall")
        if op == 0x0B:
            return self.done("ud2")
        if op == 0x1E and self.f3:
            nxt = self.u8()
            if nxt == 0xFA:
                return self.done("endbr64")
            if nxt == 0xFB:
                return self.done("endbr32")
            raise DecodeFailureError(f"unsupported 0f1e form at {self.address:#x}")
        if op in (0x18, 0x19, 0x1A, 0x1B, 0x1C, 0x1D, 0x1E, 0x1F):
            mod, _reg, rm = self.modrm()
            return self.done("nop", self.rm_operand(mod, rm, self.opsize))
        if op in (0x10, 0x11):
            return self._sse_mov(op)
        if op in (0x28, 0x29):
            mnemonic = "movapd" if self.osz16 else "movaps"
            return self._xmm_rm_form(mnemonic, store=(op == 0x29), mem_size=128)
        if op == 0x2A:
            mnemonic = "cvtsi2sd" if self.f2 else "cvtsi2ss"
            mod, reg, rm = self.modrm()
            return self.done(mnemonic, f"{self.reg_operand(reg, 64, xmm=True)}, "
                                       f"{self.rm_operand(mod, rm, self.opsize)}")
        if op in (0x2C, 0x2D):
            flavor = "sd" if self.f2 else "ss"
            mnemonic = f"cvtt{flavor}2si" if op == 0x2C else f"cvt{flavor}2si"
            mod, reg, rm = self.modrm()
            mem = 64 if self.f2 else 32
            return self.done(mnemonic, f"{self.reg_operand(reg, self.opsize)}, "
                                       f"{self.rm_operand(mod, rm, mem, xmm=True)}")
        if op in (0x2E, 0x2F):
            base = "ucomis" if op == 0x2E else "comis"
            mnemonic = f"{base}d" if self.osz16 else f"{base}s"
            return self._xmm_rm_form(mnemonic, store=False,
                                     mem_size=64 if self.osz16 else 32)
        if 0x40 <= op <= 0x4F:
            return self._reg_rm_form(f"cmov{_CC[op & 0xF]}", self.opsize)
        if op in (0x51, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x5C, 0x5E, 0x5D, 0x5F):
            return self._sse_arith(op)
        if op == 0x6E:
            mnemonic = "movq" if self.rex & 8 else "movd"
            mod, reg, rm = self.modrm()
            return self.done(mnemonic, f"{self.reg_operand(reg, 64, xmm=True)}, "
                                       f"{self.rm_operand(mod, rm, 64 if self.rex & 8 else 32)}")
        if op == 0x7E:
            if self.f3:
                return self._xmm_rm_form("movq", store=False, mem_size=64)
            mnemonic = "movq" if self.rex & 8 else "movd"
            mod, reg, rm = self.modrm()
            return self.done(mnemonic,
                             f"{self.rm_operand(mod, rm, 64 if self.rex & 8 else 32)}, "
                             f"{self.reg_operand(reg, 64, xmm=True)}")
        if op == 0xD6:
            return self._xmm_rm_form("movq", store=True, mem_size=64)
        if op == 0xEF:
            return self._xmm_rm_form("pxor", store=False, mem_size=128)
        if 0x80 <= op <= 0x8F:
            return self.done(f"j{_CC[op & 0xF]}", f"{self.rel_target(32):#x}")
        if 0x90 <= op <= 0x9F:
            mod, _reg, rm = self.modrm()
            return self.done(f"set{_CC[op & 0xF]}", self.rm_operand(mod, rm, 8))
        if op == 0xA2:
            return self.done("cpuid")
        if op == 0xAE:
            mod, reg, rm = self.modrm()
            if mod == 3:
                fence = {5: "lfence", 6: "mfence", 7: "sfence"}.get(reg)
                if fence:
                    return self.done(fence)
            raise DecodeFailureError(f"unsupported 0fae form at {self.address:#x}")
        if op == 0xAF:
            return self._reg_rm_form("imul", self.opsize)
        if op in (0xB0, 0xB1):
            return self._rm_reg_form("cmpxchg", 8 if op == 0xB0 else self.opsize)
        if op in (0xB6, 0xB7):
            mod, reg, rm = self.modrm()
            return self.done("movzx", f"{self.reg_operand(reg, self.opsize)}, "
                                      f"{self.rm_operand(mod, rm, 8 if op == 0xB6 else 16)}")
        if op in (0xBE, 0xBF):
            mod, reg, rm = self.modrm()
            return self.done("movsx", f"{self.reg_operand(reg, self.opsize)}, "
                                      f"{self.rm_operand(mod, rm, 8 if op == 0xBE else 16)}")
        if op in (0xC0, 0xC1):
            return self._rm_reg_form("xadd", 8 if op == 0xC0 else self.opsize)
        raise DecodeFailureError(f"unsupported opcode 0f{op:02x} at {self.address:#x}")

    def _sse_mov(self, op: int) -> Instruction:
        if self.f2:
            mnemonic, mem = "movsd", 64
        elif self.f3:
            mnemonic, mem = "movss", 32
        elif self.osz16:
            mnemonic, mem = "movupd", 128
        else:
            mnemonic, mem = "movups", 128
        return self._xmm_rm_form(mnemonic, store=(op == 0x11), mem_size=mem)

    def _sse_arith(self, op: int) -> Instruction:
        names = {0x51: "sqrt", 0x54: "and", 0x55: "andn", 0x56: "or", 0x57: "xor",
                 0x58: "add", 0x59: "mul", 0x5A: "cvt", 0x5C: "sub",
                 0x5D: "min", 0x5E: "div", 0x5F: "max"}
        base = names[op]
        if op == 0x5A:
            if self.f3:
                mnemonic, mem = "cvtss2sd", 32
            elif self.f2:
                mnemonic, mem = "cvtsd2ss", 64
            elif self.osz16:
                mnemonic, mem = "cvtpd2ps", 128
            else:
                mnemonic, mem = "cvtps2pd", 64
        elif self.f2:
            mnemonic, mem = f"{base}sd", 64
        elif self.f3:
            mnemonic, mem = f"{base}ss", 32
        elif self.osz16:
            mnemonic, mem = f"{base}pd", 128
        else:
            mnemonic, mem = f"{base}ps", 128
        return self._xmm_rm_form(mnemonic, store=False, mem_size=mem)

    def _xmm_rm_form(self, mnemonic: str, store: bool, mem_size: int) -> Instruction:
        mod, reg, rm = self.modrm()
        xreg = self.reg_operand(reg, 128, xmm=True)
        other = self.rm_operand(mod, rm, mem_size, xmm=True)
        if store:
            return self.done(mnemonic, f"{other}, {xreg}")
        return self.done(mnemonic, f"{xreg}, {other}")


def decode_one(data: bytes, pos: int, address: int) -> Instruction:
    """Decode the single instruction at data[pos:], mapped at *address*."""
    return _Decoder(data, pos, address).decode()


def decode_range(data: bytes, address: int) -> list[Instruction]:
    """Decode every instruction in *data*, assumed mapped at *address*.

    Stops cleanly if an undecodable byte follows a `ret` (inter-function
    padding or data); an undecodable byte before any `ret` raises
    DecodeFailureError.
    """
    out: list[Instruction] = []
    pos = 0
    seen_ret = False
    while pos < len(data):
        try:
            ins = decode_one(data, pos, address + pos)
        except DecodeFailureError:
            if seen_ret:
                break
            raise
        out.append(ins)
        pos += ins.length
        if ins.mnemonic.endswith("ret"):
            seen_ret = True
    return out
