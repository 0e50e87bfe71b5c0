"""Binary PGM (P5) and PPM (P6) readers and writers, 8-bit only.

The portable graymap/pixmap pair is the package's mandatory raster
format: trivial to parse, bit-exact to regenerate.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imaging import Image


class PnmError(ValueError):
    """Raised for unsupported or malformed PNM files."""


def _read_header_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comment lines
    n = len(buf)
    while pos < n:
        ch = buf[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise PnmError("truncated PNM header")
    return buf[start:pos], pos


def read_pnm(path: str | Path) -> Image:
    """Read a binary 8-bit PGM or PPM file into a float image in [0, 1]."""
    buf = Path(path).read_bytes()
    if len(buf) < 2:
        raise PnmError(f"{path}: not a PNM file")
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmError(
            f"{path}: unsupported format {magic!r}; only binary PGM (P5) and PPM (P6) are accepted"
        )
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_header_token(buf, pos)
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise PnmError(f"{path}: only 8-bit images (maxval 255) are supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    channels = 1 if magic == b"P5" else 3
    count = width * height * channels
    raw = buf[pos : pos + count]
    if len(raw) != count:
        raise PnmError(f"{path}: pixel data truncated ({len(raw)} of {count} bytes)")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)
    return Image(arr.astype(np.float64) / 255.0)


def write_pnm(path: str | Path, img: Image) -> None:
    """Write an image as binary PGM (1 channel) or PPM (3 channels)."""
    arr = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    magic = b"P5" if img.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    Path(path).write_bytes(header + arr.tobytes())
