#!/usr/bin/env python3
"""Regenerates src/unicode_tables.inc (letter / number / whitespace ranges)."""
import sys
import unicodedata


def ranges(pred):
    out, start = [], None
    for cp in range(0x110000):
        ok = pred(cp)
        if ok and start is None:
            start = cp
        elif not ok and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, 0x10FFFF))
    return out


def emit(name, rs):
    lines = [f"inline constexpr CodepointRange {name}[] = {{"]
    for a, b in rs:
        lines.append(f"    {{0x{a:X}, 0x{b:X}}},")
    lines.append("};")
    return "\n".join(lines)


letters = ranges(lambda cp: unicodedata.category(chr(cp)).startswith("L"))
numbers = ranges(lambda cp: unicodedata.category(chr(cp)).startswith("N"))
spaces = ranges(lambda cp: chr(cp).isspace())

body = [
    f"// Generated by scripts/gen_unicode_tables.py (Unicode {unicodedata.unidata_version}). Do not edit.",
    emit("kLetterRanges", letters),
    emit("kNumberRanges", numbers),
    emit("kSpaceRanges", spaces),
    "",
]
sys.stdout.write("\n\n".join(body))
