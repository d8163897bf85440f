"""Autonomous fuzz-driver synthesis for closed-source shared libraries.

fuzzsmith enumerates a shared object's exported functions, infers
degraded signatures from disassembly, drives a tool-calling language
model through analyze/generate/repair phases, compiles each candidate
driver with fuzzer instrumentation, smoke-runs it, and aggregates the
outcomes into an API-coverage report.
"""

__version__ = "0.1.0"
