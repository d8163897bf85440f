"""ELF64 shared-object parsing and export-surface analysis.

Manual struct-based parser for the pieces of the System V gABI this tool
needs: the section header table, ``.dynsym`` (24-byte entries) and
``.dynstr``. Parsing is strictly read-only; a loaded image is immutable
and safe to share between threads.

Only little-endian ELF64 is supported. Files of any other class are
rejected up front rather than mis-parsed.
"""

from __future__ import annotations

import fnmatch
import logging
import struct
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from .errors import (
    FuzzsmithError,
    NoDynsymError,
    NotElfError,
    TruncatedElfError,
    UnsupportedClassError,
)

log = logging.getLogger(__name__)

ELF_MAGIC = b"\x7fELF"
ELFCLASS64 = 2
ELFDATA2LSB = 1
EM_X86_64 = 62

SHT_PROGBITS = 1
SHT_STRTAB = 3
SHT_RELA = 4
SHT_DYNSYM = 11

SHF_WRITE = 0x1
SHF_ALLOC = 0x2
SHF_EXECINSTR = 0x4

STB_GLOBAL = 1
STB_WEAK = 2
STT_FUNC = 2

SHN_UNDEF = 0
SHN_LORESERVE = 0xFF00
SHN_ABS = 0xFFF1
SHN_COMMON = 0xFFF2

_EHDR = struct.Struct("<HHIQQQIHHHHHH")  # fields after e_ident
_SHDR = struct.Struct("<IIQQQQIIQQ")
_SYM = struct.Struct("<IBBHQQ")  # Elf64_Sym, 24 bytes
_RELA = struct.Struct("<QQq")  # Elf64_Rela, 24 bytes

DEFAULT_DENYLIST = ("_init", "_fini", "__*")


class Machine(Enum):
    AMD64 = "AMD64"
    OTHER = "OTHER"


class Binding(Enum):
    GLOBAL = "GLOBAL"
    WEAK = "WEAK"


class ExclusionReason(Enum):
    ZERO_ARITY = "ZERO_ARITY"
    DENYLIST_PATTERN = "DENYLIST_PATTERN"
    NOT_FUNCTION = "NOT_FUNCTION"
    UNDEFINED = "UNDEFINED"


@dataclass(frozen=True)
class Section:
    name: str
    sh_type: int
    flags: int
    addr: int
    offset: int
    size: int
    link: int
    entsize: int

    @property
    def executable(self) -> bool:
        return bool(self.flags & SHF_EXECINSTR)

    @property
    def allocated(self) -> bool:
        return bool(self.flags & SHF_ALLOC)

    def contains_addr(self, addr: int) -> bool:
        return self.addr <= addr <= self.addr + self.size


@dataclass(frozen=True)
class DynSymbol:
    name: str
    value: int
    size: int
    sym_type: int
    binding: int
    visibility: int
    shndx: int

    @property
    def defined(self) -> bool:
        return self.shndx != SHN_UNDEF


@dataclass(frozen=True)
class BinaryImage:
    """An immutable, fully decoded view of one ELF64 shared object."""

    path: Path
    fmt: str  # always "ELF64"
    machine: Machine
    sections: tuple[Section, ...]
    dynamic_symbols: tuple[DynSymbol, ...]
    data: bytes

    def section_bytes(self, section: Section) -> bytes:
        return self.data[section.offset : section.offset + section.size]

    def section_for_addr(self, addr: int) -> Section | None:
        """Allocated section whose [addr, addr+size) range covers addr."""
        for sec in self.sections:
            if sec.allocated and sec.size and sec.addr <= addr < sec.addr + sec.size:
                return sec
        return None

    def bytes_at(self, addr: int, length: int) -> bytes:
        sec = self.section_for_addr(addr)
        if sec is None:
            raise TruncatedElfError(f"address {addr:#x} not in any allocated section")
        off = sec.offset + (addr - sec.addr)
        end = min(off + length, sec.offset + sec.size)
        return self.data[off:end]

    def defined_function_addresses(self) -> list[int]:
        """Sorted addresses of every defined FUNC dynamic symbol."""
        addrs = {
            s.value
            for s in self.dynamic_symbols
            if s.sym_type == STT_FUNC and s.defined
        }
        return sorted(addrs)


@dataclass(frozen=True)
class ExportedFunction:
    name: str
    address: int
    binding: Binding
    fuzzable: bool = False
    exclusion_reason: ExclusionReason | None = None


def load_binary(path: str | Path) -> BinaryImage:
    """Parse *path* as a little-endian ELF64 object.

    Raises NotElfError, UnsupportedClassError, NoDynsymError, or
    TruncatedElfError depending on what is wrong with the file.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16 or data[:4] != ELF_MAGIC:
        raise NotElfError(f"{path}: bad magic bytes")
    if data[4] != ELFCLASS64:
        raise UnsupportedClassError(f"{path}: only ELF64 is supported (class={data[4]})")
    if data[5] != ELFDATA2LSB:
        raise UnsupportedClassError(f"{path}: only little-endian objects are supported")
    if len(data) < 64:
        raise TruncatedElfError(f"{path}: file shorter than the ELF64 header")

    (
        _e_type,
        e_machine,
        _e_version,
        _e_entry,
        _e_phoff,
        e_shoff,
        _e_flags,
        _e_ehsize,
        _e_phentsize,
        _e_phnum,
        e_shentsize,
        e_shnum,
        e_shstrndx,
    ) = _EHDR.unpack_from(data, 16)

    machine = Machine.AMD64 if e_machine == EM_X86_64 else Machine.OTHER

    if e_shoff == 0 or e_shnum == 0:
        raise NoDynsymError(f"{path}: no section header table")
    if e_shentsize < _SHDR.size:
        raise TruncatedElfError(f"{path}: section header entry size {e_shentsize}")
    if e_shoff + e_shnum * e_shentsize > len(data):
        raise TruncatedElfError(f"{path}: section header table extends past end of file")

    raw_sections = []
    for i in range(e_shnum):
        fields = _SHDR.unpack_from(data, e_shoff + i * e_shentsize)
        raw_sections.append(fields)

    # Section names via .shstrtab.
    names = [""] * e_shnum
    if e_shstrndx < e_shnum:
        _, _, _, _, str_off, str_size, _, _, _, _ = raw_sections[e_shstrndx]
        if str_off + str_size > len(data):
            raise TruncatedElfError(f"{path}: section name table out of bounds")
        shstr = data[str_off : str_off + str_size]
        for i, fields in enumerate(raw_sections):
            names[i] = _cstr(shstr, fields[0])

    sections = tuple(
        Section(
            name=names[i],
            sh_type=f[1],
            flags=f[2],
            addr=f[3],
            offset=f[4],
            size=f[5],
            link=f[6],
            entsize=f[9],
        )
        for i, f in enumerate(raw_sections)
    )

    dynsym = next((s for s in sections if s.sh_type == SHT_DYNSYM), None)
    if dynsym is None:
        raise NoDynsymError(f"{path}: no .dynsym section (static or fully stripped object)")
    if dynsym.offset + dynsym.size > len(data):
        raise TruncatedElfError(f"{path}: .dynsym extends past end of file")
    if dynsym.link >= len(sections):
        raise TruncatedElfError(f"{path}: .dynsym string table link out of range")
    dynstr_sec = sections[dynsym.link]
    if dynstr_sec.offset + dynstr_sec.size > len(data):
        raise TruncatedElfError(f"{path}: .dynstr extends past end of file")
    dynstr = data[dynstr_sec.offset : dynstr_sec.offset + dynstr_sec.size]

    entsize = dynsym.entsize or _SYM.size
    if entsize != _SYM.size:
        raise TruncatedElfError(f"{path}: unexpected .dynsym entry size {entsize}")

    symbols = []
    for off in range(dynsym.offset, dynsym.offset + dynsym.size - entsize + 1, entsize):
        st_name, st_info, st_other, st_shndx, st_value, st_size = _SYM.unpack_from(data, off)
        if st_name >= len(dynstr):
            raise TruncatedElfError(
                f"{path}: symbol name offset {st_name:#x} outside .dynstr"
            )
        sym = DynSymbol(
            name=_cstr(dynstr, st_name),
            value=st_value,
            size=st_size,
            sym_type=st_info & 0xF,
            binding=st_info >> 4,
            visibility=st_other & 0x3,
            shndx=st_shndx,
        )
        _check_symbol_placement(path, sym, sections)
        symbols.append(sym)

    return BinaryImage(
        path=path,
        fmt="ELF64",
        machine=machine,
        sections=sections,
        dynamic_symbols=tuple(symbols),
        data=data,
    )


def _check_symbol_placement(path: Path, sym: DynSymbol, sections: Sequence[Section]) -> None:
    """Defined symbols must point inside the section they claim to live in."""
    if sym.shndx == SHN_UNDEF or sym.shndx >= SHN_LORESERVE:
        return
    if sym.shndx >= len(sections):
        raise TruncatedElfError(
            f"{path}: symbol {sym.name!r} references section index {sym.shndx}"
        )
    sec = sections[sym.shndx]
    if not sec.contains_addr(sym.value):
        raise TruncatedElfError(
            f"{path}: symbol {sym.name!r} at {sym.value:#x} outside section {sec.name!r}"
        )


def _cstr(table: bytes, offset: int) -> str:
    end = table.find(b"\x00", offset)
    if end == -1:
        end = len(table)
    return table[offset:end].decode("utf-8", errors="replace")


def list_exports(image: BinaryImage) -> list[ExportedFunction]:
    """Defined GLOBAL/WEAK FUNC dynamic symbols, ordered by (address, name).

    Duplicate names collapse to the first occurrence in that ordering; the
    dropped duplicates are logged so per-name accounting stays one entry
    per API name.
    """
    candidates = [
        sym
        for sym in image.dynamic_symbols
        if sym.sym_type == STT_FUNC
        and sym.binding in (STB_GLOBAL, STB_WEAK)
        and sym.defined
        and sym.name
    ]
    candidates.sort(key=lambda s: (s.value, s.name))
    exports: list[ExportedFunction] = []
    seen: set[str] = set()
    for sym in candidates:
        if sym.name in seen:
            log.debug("duplicate export %r at %#x dropped", sym.name, sym.value)
            continue
        seen.add(sym.name)
        exports.append(
            ExportedFunction(
                name=sym.name,
                address=sym.value,
                binding=Binding.WEAK if sym.binding == STB_WEAK else Binding.GLOBAL,
            )
        )
    return exports


# A signature provider is anything that maps an export to an arity-bearing
# signature; the disasm module supplies the real implementations.
SignatureProvider = Callable[[ExportedFunction], "object"]


def filter_fuzzable(
    exports: Sequence[ExportedFunction],
    signature_of: SignatureProvider,
    denylist: Sequence[str] = DEFAULT_DENYLIST,
) -> list[ExportedFunction]:
    """Annotate every export with a fuzzability verdict.

    A function is fuzz-able when its inferred signature takes at least one
    parameter and its name matches no denylist pattern. Nothing is dropped:
    the result has the same length and the same names as the input.
    """
    verdicts: list[ExportedFunction] = []
    for fn in exports:
        if any(fnmatch.fnmatchcase(fn.name, pat) for pat in denylist):
            verdicts.append(
                replace(fn, fuzzable=False, exclusion_reason=ExclusionReason.DENYLIST_PATTERN)
            )
            continue
        try:
            sig = signature_of(fn)
        except FuzzsmithError as exc:
            log.warning("signature inference failed for %s: %s", fn.name, exc)
            verdicts.append(
                replace(fn, fuzzable=False, exclusion_reason=ExclusionReason.NOT_FUNCTION)
            )
            continue
        if len(getattr(sig, "params", ())) == 0:
            verdicts.append(
                replace(fn, fuzzable=False, exclusion_reason=ExclusionReason.ZERO_ARITY)
            )
        else:
            verdicts.append(replace(fn, fuzzable=True, exclusion_reason=None))
    return verdicts
