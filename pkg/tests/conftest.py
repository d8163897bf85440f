"""Shared fixtures: small C shared libraries built once per session.

Every library is compiled from source at gcc -O0 so the disassembly has
the frame-pointer-and-stack-slot shape the signature heuristics target.
Each library also gets a stripped twin (dynamic symbols survive strip).
"""

from __future__ import annotations

import shutil
import subprocess
from pathlib import Path

import pytest

GCC = shutil.which("gcc")
CLANGXX = shutil.which("clang++")
READELF = shutil.which("readelf")
OBJDUMP = shutil.which("objdump")

needs_gcc = pytest.mark.skipif(GCC is None, reason="gcc not available")
needs_clangxx = pytest.mark.skipif(CLANGXX is None, reason="clang++ not available")
needs_readelf = pytest.mark.skipif(READELF is None, reason="readelf not available")
needs_objdump = pytest.mark.skipif(OBJDUMP is None, reason="objdump not available")


MAIN_FIXTURE_C = r"""
#include <stddef.h>
#include <stdint.h>
#include <string.h>

int64_t add(int64_t a, int64_t b) { return a + b; }

char *concat(char *dst, const char *src) { return strcat(dst, src); }

int64_t parse_buf(const unsigned char *buf, size_t len) {
  int64_t acc = 0;
  for (size_t i = 0; i < len; i++) acc += buf[i];
  return acc;
}

void get_version(void) {}

void reg_callback(void (*fn)(int)) {
  if (fn) fn(7);
}

static int64_t helper(int64_t v) { return v * 3 + 1; }

int64_t use_helper(int64_t v) { return helper(v); }

int64_t process_blob(const uint8_t *blob, size_t n, int flags) {
  uint8_t tmp[64];
  if (n > sizeof tmp) n = sizeof tmp;
  memcpy(tmp, blob, n);
  return (int64_t)tmp[0] + flags;
}

int64_t __probe_internal(int64_t v) { return v; }

int64_t alias_a(int64_t v) { return v + 2; }
extern int64_t alias_b(int64_t) __attribute__((alias("alias_a")));
"""

# Exports of MAIN_FIXTURE_C that the pipeline should treat as fuzzable.
MAIN_FUZZABLE = {"add", "concat", "parse_buf", "reg_callback", "use_helper", "process_blob"}

FIVE_FIXTURE_C = r"""
#include <stdint.h>

int64_t rl_alpha(int64_t v) { return v + 1; }
int64_t rl_bravo(int64_t v) { return v * 2; }
int64_t rl_charlie(int64_t v) { return v - 3; }
int64_t rl_delta(int64_t v) { return v ^ 4; }
int64_t rl_echo(int64_t v) { return v | 5; }
"""

FIVE_FUZZABLE = ("rl_alpha", "rl_bravo", "rl_charlie", "rl_delta", "rl_echo")

SOLO_FIXTURE_C = r"""
#include <stdint.h>

int64_t solo_entry(int64_t v) { return v + 41; }
"""


def build_shared_library(source: str, directory: Path, name: str) -> Path:
    """Compile `source` into `directory/name` with a matching SONAME."""
    directory.mkdir(parents=True, exist_ok=True)
    c_file = directory / (Path(name).stem + ".c")
    c_file.write_text(source, encoding="utf-8")
    out = directory / name
    subprocess.run(
        [
            GCC,
            "-O0",
            "-fPIC",
            "-shared",
            f"-Wl,-soname,{name}",
            "-o",
            str(out),
            str(c_file),
        ],
        check=True,
        capture_output=True,
    )
    return out


def strip_library(library: Path) -> Path:
    stripped = library.with_name(library.stem + "-stripped.so")
    shutil.copy2(library, stripped)
    subprocess.run(["strip", "--strip-all", str(stripped)], check=True)
    return stripped


@pytest.fixture(scope="session")
def fixture_library(tmp_path_factory) -> Path:
    if GCC is None:
        pytest.skip("gcc not available")
    return build_shared_library(
        MAIN_FIXTURE_C, tmp_path_factory.mktemp("mainlib"), "libmainfix.so"
    )


@pytest.fixture(scope="session")
def stripped_library(fixture_library) -> Path:
    return strip_library(fixture_library)


@pytest.fixture(scope="session")
def five_function_library(tmp_path_factory) -> Path:
    if GCC is None:
        pytest.skip("gcc not available")
    return build_shared_library(
        FIVE_FIXTURE_C, tmp_path_factory.mktemp("fivelib"), "librepair.so"
    )


@pytest.fixture(scope="session")
def solo_library(tmp_path_factory) -> Path:
    if GCC is None:
        pytest.skip("gcc not available")
    return build_shared_library(
        SOLO_FIXTURE_C, tmp_path_factory.mktemp("sololib"), "libsolo.so"
    )


# ---------------------------------------------------------------------------
# Pre-built smoke-run binaries (compiled once, run many times)


NOMINAL_DRIVER = r"""
#include <stdint.h>
#include <stddef.h>
extern "C" int64_t add(int64_t, int64_t);
extern "C" int LLVMFuzzerTestOneInput(const uint8_t *data, size_t size) {
  int64_t a = size ? data[0] : 0;
  add(a, 1);
  return 0;
}
"""

CRASH_DRIVER = r"""
#include <stdint.h>
#include <stddef.h>
extern "C" int LLVMFuzzerTestOneInput(const uint8_t *data, size_t size) {
  volatile int *p = (volatile int *)0;
  *p = (int)size;
  return 0;
}
"""

EARLY_EXIT_BINARY = r"""
#include <stdio.h>
int main(void) { puts("not a fuzz target"); return 0; }
"""


def _compile_fuzzer(source: str, out: Path, library: Path) -> Path:
    src = out.with_suffix(".cc")
    src.write_text(source, encoding="utf-8")
    subprocess.run(
        [
            CLANGXX,
            "-g",
            "-O1",
            "-fsanitize=fuzzer,address",
            str(src),
            "-o",
            str(out),
            f"-L{library.parent}",
            f"-l:{library.name}",
        ],
        check=True,
        capture_output=True,
    )
    return out


@pytest.fixture(scope="session")
def smoke_binaries(tmp_path_factory, fixture_library) -> dict:
    """nominal / crash / missing-lib / early-exit binaries for smoke tests."""
    if CLANGXX is None:
        pytest.skip("clang++ not available")
    work = tmp_path_factory.mktemp("smokebin")

    nominal = _compile_fuzzer(NOMINAL_DRIVER, work / "nominal.bin", fixture_library)
    crash = _compile_fuzzer(CRASH_DRIVER, work / "crash.bin", fixture_library)

    # A driver linked against a library that will not be found at run time.
    ghost_dir = work / "ghost"
    ghost = build_shared_library(SOLO_FIXTURE_C, ghost_dir, "libghost.so")
    missing_driver = r"""
#include <stdint.h>
#include <stddef.h>
extern "C" int64_t solo_entry(int64_t);
extern "C" int LLVMFuzzerTestOneInput(const uint8_t *data, size_t size) {
  solo_entry((int64_t)size);
  return 0;
}
"""
    missing = _compile_fuzzer(missing_driver, work / "missing.bin", ghost)
    shutil.rmtree(ghost_dir)  # run-time lookup of libghost.so now fails

    early_src = work / "early.c"
    early_src.write_text(EARLY_EXIT_BINARY, encoding="utf-8")
    early = work / "early.bin"
    subprocess.run(
        [GCC, "-O0", str(early_src), "-o", str(early)], check=True, capture_output=True
    )

    return {
        "nominal": nominal,
        "crash": crash,
        "missing": missing,
        "early": early,
        "library": fixture_library,
    }
