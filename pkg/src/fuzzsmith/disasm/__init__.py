"""Per-function disassembly and heuristic signature inference.

Two interchangeable providers back the analysis tools: a built-in
linear-sweep x86-64 decoder that needs no external software, and an
adapter that drives an external disassembler process over a line-oriented
JSON protocol.
"""

from .provider import (
    AdapterProvider,
    BuiltinProvider,
    Confidence,
    Disassembly,
    DisassemblyProvider,
    InferredSignature,
    TypeClass,
    function_extent,
    render_c_declaration,
)

__all__ = [
    "AdapterProvider",
    "BuiltinProvider",
    "Confidence",
    "Disassembly",
    "DisassemblyProvider",
    "InferredSignature",
    "TypeClass",
    "function_extent",
    "render_c_declaration",
]
