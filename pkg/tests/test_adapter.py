"""External disassembler adapter: protocol behavior and cross-agreement."""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

from conftest import needs_gcc, needs_objdump
from fuzzsmith.disasm import AdapterProvider, BuiltinProvider
from fuzzsmith.elf import list_exports, load_binary
from fuzzsmith.errors import AdapterUnavailableError

OBJDUMP_ADAPTER = [sys.executable, "-m", "fuzzsmith.disasm.objdump_adapter"]


@needs_gcc
@needs_objdump
class TestObjdumpAgreement:
    def test_arities_agree_with_builtin_decoder(self, fixture_library):
        """The signature heuristics are decoder-independent."""
        image = load_binary(fixture_library)
        builtin = BuiltinProvider()
        with AdapterProvider(OBJDUMP_ADAPTER) as adapter:
            for export in list_exports(image):
                ours = builtin.infer_signature(image, export)
                theirs = adapter.infer_signature(image, export)
                assert len(ours.params) == len(theirs.params), export.name
                assert ours.return_class == theirs.return_class, export.name

    def test_disassembly_byte_lengths_agree(self, fixture_library):
        image = load_binary(fixture_library)
        builtin = BuiltinProvider()
        with AdapterProvider(OBJDUMP_ADAPTER) as adapter:
            for export in list_exports(image):
                ours = builtin.get_disassembly(image, export)
                theirs = adapter.get_disassembly(image, export)
                assert ours.byte_length == theirs.byte_length, export.name


@needs_gcc
@needs_objdump
class TestAdapterProtocol:
    def test_malformed_request_yields_error_and_keeps_serving(self, fixture_library):
        proc = subprocess.Popen(
            OBJDUMP_ADAPTER,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )
        try:
            proc.stdin.write("this is not json\n")
            proc.stdin.flush()
            reply = json.loads(proc.stdout.readline())
            assert "error" in reply

            image = load_binary(fixture_library)
            target = next(e for e in list_exports(image) if e.name == "add")
            request = {
                "op": "disassemble",
                "path": str(fixture_library),
                "address": target.address,
                "length": 29,
            }
            proc.stdin.write(json.dumps(request) + "\n")
            proc.stdin.flush()
            reply = json.loads(proc.stdout.readline())
            assert reply.get("instructions"), reply
            assert all(
                set(row) >= {"address", "mnemonic", "operands"}
                for row in reply["instructions"]
            )
        finally:
            proc.kill()
            proc.wait()

    def test_unknown_op_is_an_error(self):
        proc = subprocess.Popen(
            OBJDUMP_ADAPTER, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True
        )
        try:
            proc.stdin.write(json.dumps({"op": "reassemble"}) + "\n")
            proc.stdin.flush()
            assert "error" in json.loads(proc.stdout.readline())
        finally:
            proc.kill()
            proc.wait()


class TestAdapterFailureModes:
    def test_dead_command_raises_adapter_unavailable(self):
        provider = AdapterProvider([sys.executable, "-c", "import sys; sys.exit(1)"])
        with pytest.raises(AdapterUnavailableError):
            # A request against a process that exits immediately must
            # surface ADAPTER_UNAVAILABLE, not hang or crash.
            provider._request({"op": "disassemble", "path": "x", "address": 0, "length": 1})
        provider.close()
