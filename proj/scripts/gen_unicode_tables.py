#!/usr/bin/env python3
"""Regenerates core/src/unicode_tables.inc from Python's unicodedata."""
import sys
import unicodedata

MAX_CP = 0x110000


def ranges(pred):
    out = []
    start = None
    for cp in range(MAX_CP):
        hit = pred(cp)
        if hit and start is None:
            start = cp
        elif not hit and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, MAX_CP - 1))
    return out


def emit_ranges(name, rs, f):
    f.write(f"constexpr CodeRange {name}[] = {{\n")
    for a, b in rs:
        f.write(f"    {{0x{a:X}, 0x{b:X}}},\n")
    f.write("};\n\n")


def main(path):
    punct = ranges(lambda cp: unicodedata.category(chr(cp)).startswith("P"))
    space = ranges(lambda cp: chr(cp).isspace())
    word = ranges(lambda cp: chr(cp).isalnum() or chr(cp) == "_")
    lower = []
    for cp in range(MAX_CP):
        c = chr(cp)
        lc = c.lower()
        if lc != c and len(lc) == 1:
            lower.append((cp, ord(lc)))
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"// Generated by scripts/gen_unicode_tables.py (Unicode {unicodedata.unidata_version}). Do not edit.\n\n")
        emit_ranges("kPunctuationRanges", punct, f)
        emit_ranges("kWhitespaceRanges", space, f)
        emit_ranges("kWordCharRanges", word, f)
        f.write("constexpr CaseMapping kLowercaseMap[] = {\n")
        for a, b in lower:
            f.write(f"    {{0x{a:X}, 0x{b:X}}},\n")
        f.write("};\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "core/src/unicode_tables.inc")
