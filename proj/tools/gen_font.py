#!/usr/bin/env python3
"""Rasterize DejaVu Sans Mono Bold into the 1-bit glyph table used for blueprint text.

Usage: gen_font.py OUT.inc
Regenerating is only needed when the cell size changes; the output is committed.
"""
import os
import sys

import matplotlib
from PIL import Image, ImageDraw, ImageFont

CELL_W, CELL_H = 8, 14
FONT_PX = 13
FIRST, LAST = 32, 126


def main(out_path):
    ttf = os.path.join(os.path.dirname(matplotlib.__file__),
                       "mpl-data/fonts/ttf/DejaVuSansMono-Bold.ttf")
    font = ImageFont.truetype(ttf, FONT_PX)
    ascent, _ = font.getmetrics()
    baseline = CELL_H - 3
    rows_by_char = {}
    for code in range(FIRST, LAST + 1):
        img = Image.new("L", (CELL_W, CELL_H), 0)
        draw = ImageDraw.Draw(img)
        draw.text((0, baseline - ascent), chr(code), fill=255, font=font)
        rows = []
        for y in range(CELL_H):
            bits = 0
            for x in range(CELL_W):
                if img.getpixel((x, y)) >= 112:
                    bits |= 1 << (CELL_W - 1 - x)
            rows.append(bits)
        rows_by_char[code] = rows
    seen = {}
    for code, rows in rows_by_char.items():
        key = tuple(rows)
        if key in seen:
            sys.exit(f"glyph collision: {chr(code)!r} vs {chr(seen[key])!r}")
        seen[key] = code
    with open(out_path, "w") as f:
        f.write("// Generated by tools/gen_font.py from DejaVu Sans Mono Bold (Bitstream Vera license).\n")
        f.write(f"// {CELL_W}x{CELL_H} cells, one byte per row, MSB is the leftmost pixel.\n")
        for code in range(FIRST, LAST + 1):
            rows = ", ".join(f"0x{r:02x}" for r in rows_by_char[code])
            ch = chr(code)
            label = {"\\": "backslash"}.get(ch, ch)
            f.write(f"    {{{rows}}},  // {label}\n")


if __name__ == "__main__":
    main(sys.argv[1])
