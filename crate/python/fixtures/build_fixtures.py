#!/usr/bin/env python3
"""Byte-layout builder for the checked-in PE test fixtures.

Writes minimal, hand-laid-out PE32 / PE32+ images into
crates/core/tests/fixtures/. Every offset is computed here explicitly so the
fixtures do not depend on any PE library.

    python3 python/fixtures/build_fixtures.py
"""

import csv
import os
import random
import struct

ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
OUT = os.path.join(ROOT, "crates", "core", "tests", "fixtures")

FILE_ALIGN = 0x200
SECT_ALIGN = 0x1000
E_LFANEW = 0x80

DOS_STUB = b"This program cannot be run in DOS mode.\r\r\n$"


def align(x, a):
    return (x + a - 1) // a * a


def build_import_blob(rva_base, imports, pe64, trailing=b""):
    """Lay out descriptors, ILT, IAT, hint/name entries and DLL names.

    `imports` is a list of (dll, [name_or_ordinal, ...]).
    Returns (blob, import_dir_rva, import_dir_size, iat_rva, iat_size).
    """
    thunk = 8 if pe64 else 4
    ord_flag = 1 << 63 if pe64 else 1 << 31
    n_desc = len(imports) + 1
    off = n_desc * 20
    ilt_off = []
    for _, funcs in imports:
        ilt_off.append(off)
        off += (len(funcs) + 1) * thunk
    iat_start = off
    iat_off = []
    for _, funcs in imports:
        iat_off.append(off)
        off += (len(funcs) + 1) * thunk
    iat_size = off - iat_start
    hint_off = {}
    hint_blob = b""
    for di, (_, funcs) in enumerate(imports):
        for fi, f in enumerate(funcs):
            if isinstance(f, str):
                hint_off[(di, fi)] = off + len(hint_blob)
                entry = struct.pack("<H", fi) + f.encode("ascii") + b"\0"
                if len(entry) % 2:
                    entry += b"\0"
                hint_blob += entry
    off += len(hint_blob)
    name_off = []
    name_blob = b""
    for dll, _ in imports:
        name_off.append(off + len(name_blob))
        name_blob += dll.encode("ascii") + b"\0"
    off += len(name_blob)

    blob = bytearray()
    for di, (dll, funcs) in enumerate(imports):
        blob += struct.pack(
            "<IIIII",
            rva_base + ilt_off[di],
            0,
            0,
            rva_base + name_off[di],
            rva_base + iat_off[di],
        )
    blob += b"\0" * 20
    for _pass in range(2):  # ILT then IAT, identical contents on disk
        for di, (_, funcs) in enumerate(imports):
            for fi, f in enumerate(funcs):
                if isinstance(f, str):
                    val = rva_base + hint_off[(di, fi)]
                else:
                    val = ord_flag | f
                blob += struct.pack("<Q" if pe64 else "<I", val)
            blob += b"\0" * thunk
    blob += hint_blob
    blob += name_blob
    blob += trailing
    return bytes(blob), rva_base, n_desc * 20, rva_base + iat_start, iat_size


def build_pe(timestamp, imports, text=b"\x6a\x00\xff\x15\x00\x20\x40\x00\xc3",
             rdata_extra=b"", pe64=False, subsystem=3, characteristics=0x0102):
    opt_size = 0xF0 if pe64 else 0xE0
    n_sections = 2
    headers_len = E_LFANEW + 4 + 20 + opt_size + 40 * n_sections
    size_of_headers = align(headers_len, FILE_ALIGN)

    text_rva = SECT_ALIGN
    text_raw = align(len(text), FILE_ALIGN)
    rdata_rva = text_rva + align(len(text), SECT_ALIGN)
    blob, imp_rva, imp_size, iat_rva, iat_size = build_import_blob(
        rdata_rva, imports, pe64, rdata_extra)
    rdata_raw = align(len(blob), FILE_ALIGN)
    size_of_image = rdata_rva + align(len(blob), SECT_ALIGN)
    text_ptr = size_of_headers
    rdata_ptr = text_ptr + text_raw

    dos = bytearray(64)
    struct.pack_into("<2sHHHHHHHHHHHHH", dos, 0, b"MZ", 0x90, 3, 0, 4, 0, 0xFFFF,
                     0, 0xB8, 0, 0, 0, 0x40, 0)
    struct.pack_into("<I", dos, 0x3C, E_LFANEW)
    stub = DOS_STUB.ljust(E_LFANEW - 64, b"\0")

    coff = struct.pack("<4sHHIIIHH", b"PE\0\0", 0x8664 if pe64 else 0x14C, n_sections,
                       timestamp, 0, 0, opt_size,
                       characteristics | (0x0020 if pe64 else 0))

    if pe64:
        opt = struct.pack("<HBBIIIIIQIIHHHHHHIIIIHHQQQQII",
                          0x20B, 14, 0, text_raw, rdata_raw, 0, text_rva, text_rva,
                          0x140000000, SECT_ALIGN, FILE_ALIGN, 6, 0, 0, 0, 6, 0, 0,
                          size_of_image, size_of_headers, 0, subsystem, 0x8160,
                          0x100000, 0x1000, 0x100000, 0x1000, 0, 16)
    else:
        opt = struct.pack("<HBBIIIIIIIIIHHHHHHIIIIHHIIIIII",
                          0x10B, 14, 0, text_raw, rdata_raw, 0, text_rva, text_rva,
                          rdata_rva, 0x400000, SECT_ALIGN, FILE_ALIGN, 6, 0, 0, 0, 6,
                          0, 0, size_of_image, size_of_headers, 0, subsystem, 0x8140,
                          0x100000, 0x1000, 0x100000, 0x1000, 0, 16)
    dirs = [(0, 0)] * 16
    if imports:
        dirs[1] = (imp_rva, imp_size)
        dirs[12] = (iat_rva, iat_size)
    opt += b"".join(struct.pack("<II", a, s) for a, s in dirs)
    assert len(opt) == opt_size, (len(opt), opt_size)

    sections = struct.pack("<8sIIIIIIHHI", b".text", len(text), text_rva, text_raw,
                           text_ptr, 0, 0, 0, 0, 0x60000020)
    sections += struct.pack("<8sIIIIIIHHI", b".rdata", len(blob), rdata_rva, rdata_raw,
                            rdata_ptr, 0, 0, 0, 0, 0x40000040)

    image = bytes(dos) + stub + coff + opt + sections
    assert len(image) == headers_len
    image = image.ljust(size_of_headers, b"\0")
    image += text.ljust(text_raw, b"\0")
    image += blob.ljust(rdata_raw, b"\0")
    return image


def write(name, data):
    path = os.path.join(OUT, name)
    with open(path, "wb") as f:
        f.write(data)
    return path


def corpus(rng):
    """Small labeled corpus: 'malware' rows carry high-entropy payloads and
    injection-style imports, 'benign' rows carry text and console imports."""
    os.makedirs(os.path.join(OUT, "corpus"), exist_ok=True)
    votes = []
    benign_imports = [
        ("KERNEL32.dll", ["GetStdHandle", "WriteFile", "ExitProcess"]),
        ("USER32.dll", ["MessageBoxA"]),
    ]
    malware_imports = [
        ("KERNEL32.dll", ["VirtualAlloc", "WriteProcessMemory", "CreateRemoteThread"]),
        ("ADVAPI32.dll", ["RegSetValueExA", 17]),
    ]
    years = [1998, 2003, 2006, 2008, 2010, 2011, 2012, 2013, 2014, 2014, 2015, 2015]
    for i in range(12):
        malicious = i % 2 == 1
        year = years[i]
        ts = int(
            (year - 1970) * 365.25 * 86400) + rng.randint(0, 200) * 86400
        if malicious:
            payload = bytes(rng.getrandbits(8) for _ in range(4096 + 512 * i))
            imports = malware_imports
            extra = b"cmd.exe /c del %s\0" % str(i).encode()
        else:
            words = [b"the", b"quick", b"brown", b"fox", b"console", b"printf", b"window"]
            payload = b" ".join(rng.choice(words) for _ in range(400 + 60 * i))
            imports = benign_imports
            extra = b"Hello from benign tool\0"
        name = "sample_%02d.exe" % i
        write(os.path.join("corpus", name), build_pe(ts, imports, text=payload,
                                                     rdata_extra=extra, pe64=(i % 4 == 0)))
        engines = 55
        if i == 6:
            alarms = 5  # ambiguous: discarded by the vote rule
        elif malicious:
            alarms = 20 + rng.randint(0, 30)
        else:
            alarms = 0
        votes.append((name, alarms, engines, ts))
    with open(os.path.join(OUT, "corpus_votes.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["file_id", "alarms", "engines", "compile_timestamp"])
        for row in votes:
            w.writerow(row)


def main():
    os.makedirs(OUT, exist_ok=True)
    rng = random.Random(20151231)

    hello = build_pe(1262304000, [("KERNEL32.dll", ["ExitProcess"])],
                     rdata_extra=b"Hello, world!\0")
    write("hello_min.exe", hello)

    write("two_imports.exe", build_pe(
        1406764800,
        [("KERNEL32.dll", ["GetStdHandle", "WriteFile"]), ("WS2_32.dll", [115])],
        rdata_extra=b"socket setup\0"))

    write("hello64.exe", build_pe(
        1438300800, [("KERNEL32.dll", ["ExitProcess"]), ("msvcrt.dll", ["printf"])],
        rdata_extra=b"Hello from x64\0", pe64=True))

    # Cut inside the section table: headers readable, sections not.
    write("truncated.exe", hello[:E_LFANEW + 4 + 20 + 0xE0 + 20])

    write("not_pe.bin", bytes(rng.getrandbits(8) for _ in range(3000)))

    corpus(rng)


if __name__ == "__main__":
    main()
