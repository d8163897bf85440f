"""Export enumeration: real libraries, corrupted files, synthetic images."""

from __future__ import annotations

import struct
import subprocess
from pathlib import Path

import pytest

import support
from conftest import MAIN_FUZZABLE, needs_gcc, needs_readelf
from fuzzsmith.disasm import BuiltinProvider, Confidence, InferredSignature, TypeClass
from fuzzsmith.elf import (
    Binding,
    ExclusionReason,
    ExportedFunction,
    filter_fuzzable,
    list_exports,
    load_binary,
)
from fuzzsmith.errors import (
    DecodeFailureError,
    NoDynsymError,
    NotElfError,
    TruncatedElfError,
    UnsupportedClassError,
)


@needs_gcc
@needs_readelf
class TestRealLibrary:
    def test_exports_match_readelf(self, fixture_library):
        image = load_binary(fixture_library)
        got = {e.name for e in list_exports(image)}
        assert got == support.readelf_defined_func_exports(fixture_library)

    def test_exports_survive_strip(self, fixture_library, stripped_library):
        normal = {e.name for e in list_exports(load_binary(fixture_library))}
        stripped = {e.name for e in list_exports(load_binary(stripped_library))}
        assert normal == stripped

    def test_exports_sorted_by_address_then_name(self, fixture_library):
        exports = list_exports(load_binary(fixture_library))
        assert exports == sorted(exports, key=lambda e: (e.address, e.name))

    def test_alias_exports_both_listed_at_same_address(self, fixture_library):
        exports = {e.name: e for e in list_exports(load_binary(fixture_library))}
        assert exports["alias_a"].address == exports["alias_b"].address

    def test_fuzzable_set(self, fixture_library):
        image = load_binary(fixture_library)
        provider = BuiltinProvider()
        annotated = filter_fuzzable(
            list_exports(image), lambda fn: provider.infer_signature(image, fn)
        )
        assert {e.name for e in annotated if e.fuzzable} == MAIN_FUZZABLE
        reasons = {e.name: e.exclusion_reason for e in annotated if not e.fuzzable}
        assert reasons["get_version"] is ExclusionReason.ZERO_ARITY
        assert reasons["__probe_internal"] is ExclusionReason.DENYLIST_PATTERN


@needs_gcc
class TestCorruptedFiles:
    @pytest.fixture()
    def lib_bytes(self, fixture_library) -> bytes:
        return fixture_library.read_bytes()

    def _write(self, tmp_path: Path, data: bytes) -> Path:
        out = tmp_path / "broken.so"
        out.write_bytes(data)
        return out

    def test_bad_magic(self, tmp_path, lib_bytes):
        with pytest.raises(NotElfError):
            load_binary(self._write(tmp_path, b"XELF" + lib_bytes[4:]))

    def test_elf32_rejected(self, tmp_path, lib_bytes):
        data = bytearray(lib_bytes)
        data[4] = 1  # ELFCLASS32
        with pytest.raises(UnsupportedClassError):
            load_binary(self._write(tmp_path, bytes(data)))

    def test_big_endian_rejected(self, tmp_path, lib_bytes):
        data = bytearray(lib_bytes)
        data[5] = 2  # ELFDATA2MSB
        with pytest.raises(UnsupportedClassError):
            load_binary(self._write(tmp_path, bytes(data)))

    def test_truncated_file(self, tmp_path, lib_bytes):
        with pytest.raises(TruncatedElfError):
            load_binary(self._write(tmp_path, lib_bytes[: len(lib_bytes) // 2]))

    def test_no_section_table(self, tmp_path, lib_bytes):
        data = bytearray(lib_bytes)
        struct.pack_into("<Q", data, 0x28, 0)  # e_shoff = 0
        with pytest.raises(NoDynsymError):
            load_binary(self._write(tmp_path, bytes(data)))

    def test_relocatable_object_has_no_dynsym(self, tmp_path, fixture_library):
        source = fixture_library.with_suffix(".c")
        obj = tmp_path / "fixture.o"
        subprocess.run(
            ["gcc", "-O0", "-fPIC", "-c", str(source), "-o", str(obj)],
            check=True,
            capture_output=True,
        )
        with pytest.raises(NoDynsymError):
            load_binary(obj)

    def test_error_codes_are_stable(self):
        assert NotElfError.code == "NOT_ELF"
        assert UnsupportedClassError.code == "UNSUPPORTED_CLASS"
        assert NoDynsymError.code == "NO_DYNSYM"
        assert TruncatedElfError.code == "TRUNCATED"


class TestSyntheticImages:
    def _load(self, tmp_path: Path, data: bytes):
        path = tmp_path / "synthetic.so"
        path.write_bytes(data)
        return load_binary(path)

    def test_undefined_symbols_excluded(self, tmp_path):
        image = self._load(
            tmp_path,
            support.make_min_elf(
                [
                    ("imported", 0, support.STB_GLOBAL, support.STT_FUNC, 0),
                    ("defined", 0x1010, support.STB_GLOBAL, support.STT_FUNC, 1),
                ]
            ),
        )
        assert [e.name for e in list_exports(image)] == ["defined"]

    def test_weak_functions_included_locals_and_objects_excluded(self, tmp_path):
        image = self._load(
            tmp_path,
            support.make_min_elf(
                [
                    ("weak_fn", 0x1010, support.STB_WEAK, support.STT_FUNC, 1),
                    ("local_fn", 0x1020, support.STB_LOCAL, support.STT_FUNC, 1),
                    ("a_global", 0x1030, support.STB_GLOBAL, support.STT_OBJECT, 1),
                ]
            ),
        )
        exports = list_exports(image)
        assert [e.name for e in exports] == ["weak_fn"]
        assert exports[0].binding is Binding.WEAK

    def test_duplicate_names_collapse_to_first(self, tmp_path):
        image = self._load(
            tmp_path,
            support.make_min_elf(
                [
                    ("dup", 0x1040, support.STB_GLOBAL, support.STT_FUNC, 1),
                    ("dup", 0x1010, support.STB_GLOBAL, support.STT_FUNC, 1),
                ]
            ),
        )
        exports = list_exports(image)
        assert len(exports) == 1
        assert exports[0].address == 0x1010  # first in (address, name) order

    def test_symbol_outside_claimed_section(self, tmp_path):
        data = support.make_min_elf(
            [("stray", 0x9000, support.STB_GLOBAL, support.STT_FUNC, 1)]
        )
        with pytest.raises(TruncatedElfError):
            self._load(tmp_path, data)

    def test_symbol_name_offset_out_of_bounds(self, tmp_path):
        data = bytearray(
            support.make_min_elf(
                [("ok", 0x1010, support.STB_GLOBAL, support.STT_FUNC, 1)]
            )
        )
        # Corrupt the second dynsym entry's st_name far past .dynstr.
        dynsym_off = 64 + 0x100 + support._SYM.size
        struct.pack_into("<I", data, dynsym_off, 0xFFFF)
        with pytest.raises(TruncatedElfError):
            self._load(tmp_path, bytes(data))


class TestFilterFuzzable:
    def _exports(self):
        return [
            ExportedFunction("one_arg", 0x1000, Binding.GLOBAL),
            ExportedFunction("no_args", 0x1100, Binding.GLOBAL),
            ExportedFunction("_init", 0x1200, Binding.GLOBAL),
            ExportedFunction("__hidden_helper", 0x1300, Binding.GLOBAL),
            ExportedFunction("data_blob", 0x1400, Binding.GLOBAL),
        ]

    @staticmethod
    def _signature_of(fn: ExportedFunction) -> InferredSignature:
        if fn.name == "no_args":
            return InferredSignature("no_args", TypeClass.VOID, (), Confidence.DERIVED)
        if fn.name == "data_blob":
            raise DecodeFailureError("not in an executable section")
        return InferredSignature(
            fn.name, TypeClass.INT64, (TypeClass.INT64,), Confidence.DERIVED
        )

    def test_verdicts(self):
        annotated = {e.name: e for e in filter_fuzzable(self._exports(), self._signature_of)}
        assert annotated["one_arg"].fuzzable
        assert annotated["one_arg"].exclusion_reason is None
        assert annotated["no_args"].exclusion_reason is ExclusionReason.ZERO_ARITY
        assert annotated["_init"].exclusion_reason is ExclusionReason.DENYLIST_PATTERN
        assert annotated["__hidden_helper"].exclusion_reason is ExclusionReason.DENYLIST_PATTERN
        assert annotated["data_blob"].exclusion_reason is ExclusionReason.NOT_FUNCTION

    def test_denylist_is_checked_before_signatures(self):
        calls = []

        def tracking(fn):
            calls.append(fn.name)
            return self._signature_of(fn)

        filter_fuzzable(self._exports(), tracking)
        assert "_init" not in calls and "__hidden_helper" not in calls

    def test_inputs_not_mutated(self):
        exports = self._exports()
        filter_fuzzable(exports, self._signature_of)
        assert all(e.fuzzable is False and e.exclusion_reason is None for e in exports)

    def test_custom_denylist(self):
        annotated = filter_fuzzable(
            self._exports(), self._signature_of, denylist=("one_*",)
        )
        by_name = {e.name: e for e in annotated}
        assert by_name["one_arg"].exclusion_reason is ExclusionReason.DENYLIST_PATTERN
        assert by_name["_init"].fuzzable
