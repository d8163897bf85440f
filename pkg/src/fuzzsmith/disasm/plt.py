"""Resolve PLT stub addresses to imported routine names.

Dynamic relocations (.rela.plt / .rela.dyn) map GOT slots to symbol
names; each PLT stub ends in an indirect ``jmp [rip+disp]`` through one
of those slots. Walking both gives a virtual-address → name map for call
targets like ``strcat@plt``, which signature inference uses as pointer
evidence.
"""

from __future__ import annotations

import struct

from ..elf import SHT_RELA, BinaryImage, Section
from ..errors import DecodeFailureError
from .x86 import decode_one

_RELA = struct.Struct("<QQq")

R_X86_64_GLOB_DAT = 6
R_X86_64_JUMP_SLOT = 7

PLT_SECTION_NAMES = (".plt", ".plt.sec", ".plt.got")
PLT_STUB_SIZE = 16


def got_slot_names(image: BinaryImage) -> dict[int, str]:
    """GOT-slot virtual address → imported symbol name."""
    slots: dict[int, str] = {}
    for sec in image.sections:
        if sec.sh_type != SHT_RELA:
            continue
        raw = image.section_bytes(sec)
        for off in range(0, len(raw) - _RELA.size + 1, _RELA.size):
            r_offset, r_info, _addend = _RELA.unpack_from(raw, off)
            r_type = r_info & 0xFFFFFFFF
            sym_index = r_info >> 32
            if r_type not in (R_X86_64_JUMP_SLOT, R_X86_64_GLOB_DAT):
                continue
            if not 0 < sym_index < len(image.dynamic_symbols):
                continue
            name = image.dynamic_symbols[sym_index].name
            if name:
                slots[r_offset] = name
    return slots


def plt_call_targets(image: BinaryImage) -> dict[int, str]:
    """PLT stub virtual address → routine name.

    Each 16-byte stub is decoded until its ``jmp [rip+disp]`` is found;
    the jmp's GOT slot identifies the routine. Stubs that resolve through
    no named slot (e.g. the PLT header) are skipped.
    """
    slots = got_slot_names(image)
    targets: dict[int, str] = {}
    for sec in image.sections:
        if sec.name not in PLT_SECTION_NAMES or not sec.executable:
            continue
        raw = image.section_bytes(sec)
        for stub_off in range(0, len(raw) - PLT_STUB_SIZE + 1, PLT_STUB_SIZE):
            stub_addr = sec.addr + stub_off
            name = _resolve_stub(raw, stub_off, stub_addr, slots)
            if name:
                targets[stub_addr] = name
    return targets


def _resolve_stub(raw: bytes, off: int, addr: int, slots: dict[int, str]) -> str | None:
    pos = off
    end = off + PLT_STUB_SIZE
    while pos < end:
        try:
            ins = decode_one(raw, pos, addr + (pos - off))
        except DecodeFailureError:
            return None
        if ins.mnemonic.endswith("jmp") and "[rip" in ins.operands:
            disp = _rip_disp(ins.operands)
            if disp is None:
                return None
            slot = ins.address + ins.length + disp
            return slots.get(slot)
        pos += ins.length
    return None


def _rip_disp(operands: str) -> int | None:
    start = operands.find("[rip")
    if start == -1:
        return None
    close = operands.find("]", start)
    inner = operands[start + 4 : close]
    if not inner:
        return 0
    sign = -1 if inner[0] == "-" else 1
    try:
        return sign * int(inner[1:], 16)
    except ValueError:
        return None
