"""Instruction decoder: byte-level goldens and text round-trips."""

from __future__ import annotations

import pytest

from conftest import needs_gcc
from fuzzsmith.disasm import x86
from fuzzsmith.disasm.provider import BuiltinProvider, function_extent
from fuzzsmith.elf import list_exports, load_binary
from fuzzsmith.errors import DecodeFailureError


def one(hexbytes: str, address: int = 0x1000) -> x86.Instruction:
    return x86.decode_one(bytes.fromhex(hexbytes), 0, address)


class TestDecodeGoldens:
    @pytest.mark.parametrize(
        "hexbytes,mnemonic,operands",
        [
            ("f30f1efa", "endbr64", ""),
            ("55", "push", "rbp"),
            ("4889e5", "mov", "rbp, rsp"),
            ("48897df8", "mov", "qword ptr [rbp-0x8], rdi"),
            ("8b45fc", "mov", "eax, dword ptr [rbp-0x4]"),
            ("488d0500100000", "lea", "rax, [rip+0x1000]"),
            ("64488b042528000000", "mov", "rax, qword ptr fs:0x28"),
            ("e8c8ffffff", "call", "0xfcd"),
            ("c3", "ret", ""),
            ("c9", "leave", ""),
            ("0f1f4000", "nop", "dword ptr [rax+0x0]"),
            ("480faf45f8", "imul", "rax, qword ptr [rbp-0x8]"),
            ("0fb6d0", "movzx", None),
            ("ffd0", "call", "rax"),
            ("ff2425a0000000", "jmp", None),
            ("7405", "je", "0x1007"),
            ("0f8425010000", "je", "0x112b"),
            ("488b0425a0000000", "mov", "rax, qword ptr [0xa0]"),
            ("662e0f1f840000000000", "nop", None),
            ("48b8efbeaddeefbeadde", "movabs", "rax, 0xdeadbeefdeadbeef"),
            ("f20f100d00000000", "movsd", "xmm1, qword ptr [rip+0x0]"),
            ("31c0", "xor", "eax, eax"),
            ("4531ed", "xor", "r13d, r13d"),
        ],
    )
    def test_single_instructions(self, hexbytes, mnemonic, operands):
        ins = one(hexbytes)
        assert ins.mnemonic == mnemonic
        if operands is not None:
            assert ins.operands == operands
        assert ins.length == len(bytes.fromhex(hexbytes))

    def test_bnd_prefix_on_branches(self):
        ins = one("f2ff2508000000")  # bnd jmp qword ptr [rip+0x8]
        assert ins.mnemonic == "bnd jmp"
        assert "rip+0x8" in ins.operands

    def test_rip_relative_keeps_raw_displacement(self):
        ins = one("488d3d10000000")  # lea rdi, [rip+0x10]
        assert ins.operands == "rdi, [rip+0x10]"

    def test_rel8_targets_are_absolute(self):
        ins = one("ebfe", 0x2000)  # jmp back to itself
        assert ins.mnemonic == "jmp"
        assert ins.operands == "0x2000"


class TestDecodeRange:
    def test_stops_after_ret_on_undecodable_padding(self):
        # ret followed by 0x06 (invalid in 64-bit mode)
        rows = x86.decode_range(bytes.fromhex("c306"), 0x1000)
        assert [r.mnemonic for r in rows] == ["ret"]

    def test_raises_on_undecodable_before_ret(self):
        with pytest.raises(DecodeFailureError):
            x86.decode_range(bytes.fromhex("5506c3"), 0x1000)

    def test_addresses_advance_by_length(self):
        rows = x86.decode_range(bytes.fromhex("554889e5c3"), 0x400)
        assert [r.address for r in rows] == [0x400, 0x401, 0x404]


class TestTextRoundTrip:
    def test_simple_round_trip(self):
        rows = x86.decode_range(bytes.fromhex("554889e5488975f0c3"), 0x1139)
        text = x86.render_text(rows)
        assert x86.parse_text(text) == [
            (r.address, r.mnemonic, r.operands) for r in rows
        ]

    def test_render_format(self):
        ins = one("55", 0x1234)
        assert ins.render() == "0x1234:\tpush\trbp"

    @needs_gcc
    def test_round_trip_over_real_function_bodies(self, fixture_library):
        image = load_binary(fixture_library)
        provider = BuiltinProvider()
        seen = 0
        for export in list_exports(image):
            dis = provider.get_disassembly(image, export)
            if not dis.instructions:
                continue
            parsed = x86.parse_text(dis.text)
            assert parsed == list(dis.instructions)
            seen += len(parsed)
        assert seen > 50  # the fixture bodies are non-trivial

    @needs_gcc
    def test_extent_of_alias_twins_is_zero(self, fixture_library):
        image = load_binary(fixture_library)
        exports = {e.name: e for e in list_exports(image)}
        for name in ("alias_a", "alias_b"):
            _start, length, bounded = function_extent(image, exports[name])
            assert length == 0 and bounded

    @needs_gcc
    def test_extents_are_bounded_by_next_symbol(self, fixture_library):
        image = load_binary(fixture_library)
        exports = list_exports(image)
        for current, following in zip(exports, exports[1:]):
            start, length, _ = function_extent(image, current)
            assert start == current.address
            assert start + length <= following.address
