#!/usr/bin/env python3
"""Independent reference values for the PE fixtures.

Reads the fixture bytes with plain struct unpacking at fixed offsets and
recomputes every feature block from first principles, without touching the
Rust code. Writes:

  crates/core/tests/fixtures/expected.json          header values and imports
  crates/core/tests/fixtures/hello_min.features.txt golden 1024-vector

    python3 python/fixtures/oracle.py
"""

import json
import math
import os
import struct

ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
FIX = os.path.join(ROOT, "crates", "core", "tests", "fixtures")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def u16(b, o):
    return struct.unpack_from("<H", b, o)[0]


def u32(b, o):
    return struct.unpack_from("<I", b, o)[0]


def u64(b, o):
    return struct.unpack_from("<Q", b, o)[0]


def cstr(b, o):
    end = b.index(b"\0", o)
    return b[o:end].decode("ascii")


DOS_FIELDS = ["e_magic", "e_cblp", "e_cp", "e_crlc", "e_cparhdr", "e_minalloc",
              "e_maxalloc", "e_ss", "e_sp", "e_csum", "e_ip", "e_cs", "e_lfarlc",
              "e_ovno"]


def numeric_fields(b):
    """Field inventory for well-formed fixtures (no truncation handling)."""
    out = []
    for i, name in enumerate(DOS_FIELDS):
        out.append(("dos." + name, u16(b, 2 * i)))
    out.append(("dos.e_oemid", u16(b, 0x24)))
    out.append(("dos.e_oeminfo", u16(b, 0x26)))
    lfanew = u32(b, 0x3C)
    out.append(("dos.e_lfanew", lfanew))
    coff = lfanew + 4
    out += [
        ("coff.machine", u16(b, coff)),
        ("coff.number_of_sections", u16(b, coff + 2)),
        ("compile_timestamp", u32(b, coff + 4)),
        ("coff.pointer_to_symbol_table", u32(b, coff + 8)),
        ("coff.number_of_symbols", u32(b, coff + 12)),
        ("coff.size_of_optional_header", u16(b, coff + 16)),
        ("coff.characteristics", u16(b, coff + 18)),
    ]
    opt = coff + 20
    magic = u16(b, opt)
    pe64 = magic == 0x20B
    o = opt
    out.append(("opt.magic", magic))
    out.append(("opt.major_linker_version", b[o + 2]))
    out.append(("opt.minor_linker_version", b[o + 3]))
    for k, name in enumerate(["size_of_code", "size_of_initialized_data",
                              "size_of_uninitialized_data", "address_of_entry_point",
                              "base_of_code"]):
        out.append(("opt." + name, u32(b, o + 4 + 4 * k)))
    if pe64:
        out.append(("opt.image_base", u64(b, o + 24)))
    else:
        out.append(("opt.base_of_data", u32(b, o + 24)))
        out.append(("opt.image_base", u32(b, o + 28)))
    out.append(("opt.section_alignment", u32(b, o + 32)))
    out.append(("opt.file_alignment", u32(b, o + 36)))
    for k, name in enumerate(["major_operating_system_version",
                              "minor_operating_system_version", "major_image_version",
                              "minor_image_version", "major_subsystem_version",
                              "minor_subsystem_version"]):
        out.append(("opt." + name, u16(b, o + 40 + 2 * k)))
    for k, name in enumerate(["win32_version_value", "size_of_image", "size_of_headers",
                              "checksum"]):
        out.append(("opt." + name, u32(b, o + 52 + 4 * k)))
    out.append(("opt.subsystem", u16(b, o + 68)))
    out.append(("opt.dll_characteristics", u16(b, o + 70)))
    w = 8 if pe64 else 4
    rd = u64 if pe64 else u32
    for k, name in enumerate(["size_of_stack_reserve", "size_of_stack_commit",
                              "size_of_heap_reserve", "size_of_heap_commit"]):
        out.append(("opt." + name, rd(b, o + 72 + w * k)))
    p = o + 72 + 4 * w
    out.append(("opt.loader_flags", u32(b, p)))
    n_rva = u32(b, p + 4)
    out.append(("opt.number_of_rva_and_sizes", n_rva))
    dd = p + 8
    dirs = []
    for k in range(min(n_rva, 16)):
        va, sz = u32(b, dd + 8 * k), u32(b, dd + 8 * k + 4)
        dirs.append((va, sz))
        out.append(("opt.data_directory.%d.virtual_address" % k, va))
        out.append(("opt.data_directory.%d.size" % k, sz))
    sec = opt + u16(b, coff + 16)
    sections = []
    for k in range(u16(b, coff + 2)):
        s = sec + 40 * k
        vsize, va, rawsize, rawptr = u32(b, s + 8), u32(b, s + 12), u32(b, s + 16), u32(b, s + 20)
        chars = u32(b, s + 36)
        sections.append((va, vsize, rawsize, rawptr))
        out.append(("section.%d.virtual_size" % k, vsize))
        out.append(("section.%d.virtual_address" % k, va))
        out.append(("section.%d.size_of_raw_data" % k, rawsize))
        out.append(("section.%d.characteristics" % k, chars))
    out.append(("parse_truncated", 0))
    return out, dirs, sections, pe64


def imports(b):
    _, dirs, sections, pe64 = numeric_fields(b)

    def off(rva):
        for va, vsize, rawsize, rawptr in sections:
            if va <= rva < va + max(vsize, rawsize):
                return rawptr + rva - va
        return rva

    res = []
    imp_rva = dirs[1][0]
    if imp_rva == 0:
        return res
    d = off(imp_rva)
    while True:
        ilt, _, _, name_rva, iat = struct.unpack_from("<IIIII", b, d)
        if (ilt, name_rva, iat) == (0, 0, 0):
            break
        dll = cstr(b, off(name_rva))
        t = off(ilt or iat)
        while True:
            v = u64(b, t) if pe64 else u32(b, t)
            if v == 0:
                break
            if v >> (63 if pe64 else 31):
                res.append((dll, "ord%d" % (v & 0xFFFF)))
            else:
                res.append((dll, cstr(b, off(v & 0x7FFFFFFF) + 2)))
            t += 8 if pe64 else 4
        d += 20
    return res


def entropy(window):
    counts = [0] * 256
    for x in window:
        counts[x] += 1
    n = len(window)
    return -sum((c / n) * math.log2(c / n) for c in counts if c)


def byte_entropy_block(b):
    hist = [0] * 256
    if len(b) < 1024:
        windows = [b]
    else:
        windows = [b[s:s + 1024] for s in range(0, len(b) - 1024 + 1, 256)]
    for w in windows:
        e = min(int(entropy(w) / 0.5), 15)
        for x in w:
            hist[e * 16 + x // 16] += 1
    return hist


def import_block(imps):
    out = [0] * 256
    for dll, fn in imps:
        out[fnv1a64((dll.lower() + ":" + fn).encode()) % 256] += 1
    return out


def metadata_block(fields):
    out = [0] * 256
    for name, v in fields:
        out[fnv1a64(name.encode()) % 256] += max(v, 0)
    return out


def string_block(b):
    out = [0] * 256
    run = bytearray()
    for x in list(b) + [0]:
        if 0x20 <= x <= 0x7E:
            run.append(x)
        else:
            if len(run) >= 5:
                out[fnv1a64(bytes(run)) % 256] += 1
            run = bytearray()
    return out


def main():
    expected = {}
    for name in ["hello_min.exe", "two_imports.exe", "hello64.exe"]:
        with open(os.path.join(FIX, name), "rb") as f:
            b = f.read()
        fields, _, _, _ = numeric_fields(b)
        lfanew = u32(b, 0x3C)
        expected[name] = {
            "compile_timestamp": u32(b, lfanew + 4 + 4),
            "imports": imports(b),
            "numeric_fields": fields,
        }
    expected["fnv1a64"] = {
        s: fnv1a64(s.encode()) for s in ["", "a", "kernel32.dll:ExitProcess", "foobar"]
    }
    # A pair of distinct names landing in the same metadata bin.
    target = fnv1a64(b"x") % 256
    for i in range(100000):
        cand = "field%d" % i
        if fnv1a64(cand.encode()) % 256 == target:
            expected["metadata_collision"] = ["x", cand, target]
            break

    with open(os.path.join(FIX, "expected.json"), "w") as f:
        json.dump(expected, f, indent=1)

    with open(os.path.join(FIX, "hello_min.exe"), "rb") as f:
        b = f.read()
    fields, _, _, _ = numeric_fields(b)
    raw = (byte_entropy_block(b) + import_block(imports(b)) + metadata_block(fields)
           + string_block(b))
    assert len(raw) == 1024
    with open(os.path.join(FIX, "hello_min.features.txt"), "w") as f:
        for x in raw:
            f.write(repr(math.log10(1.0 + x)) + "\n")


if __name__ == "__main__":
    main()
