"""8-bit PNG and PPM (P6) reading/writing, plus pad/crop helpers.

PNG support covers non-interlaced 8-bit grayscale, gray+alpha, RGB and
RGBA (filters 0-4 on read; writes are RGB with filter 0).  Everything
decodes to an (h, w, 3) uint8 array: grayscale is replicated across
channels and alpha is dropped.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ContractViolation, FormatError, TruncatedFileError

_PNG_SIG = b"\x89PNG\r\n\x1a\n"
_CHANNELS = {0: 1, 2: 3, 4: 2, 6: 4}


def read_image(path) -> np.ndarray:
    """Load a PNG or PPM file into an (h, w, 3) uint8 array."""
    data = Path(path).read_bytes()
    if data[:8] == _PNG_SIG:
        return decode_png(data)
    if data[:2] == b"P6":
        return decode_ppm(data)
    raise FormatError(f"{path}: neither PNG nor PPM (P6)")


def write_image(path, arr: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        path.write_bytes(encode_ppm(arr))
    else:
        path.write_bytes(encode_png(arr))


# ---------------------------------------------------------------------------
# PNG

def decode_png(data: bytes) -> np.ndarray:
    if data[:8] != _PNG_SIG:
        raise FormatError("bad PNG signature")
    pos = 8
    ihdr = None
    idat = bytearray()
    while pos + 8 <= len(data):
        length, ctype = struct.unpack_from(">I4s", data, pos)
        pos += 8
        chunk = data[pos:pos + length]
        if len(chunk) != length:
            raise TruncatedFileError("PNG chunk truncated")
        pos += length + 4  # skip CRC
        if ctype == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", chunk)
        elif ctype == b"IDAT":
            idat.extend(chunk)
        elif ctype == b"IEND":
            break
    if ihdr is None:
        raise FormatError("PNG missing IHDR")
    w, h, depth, color, comp, filt, interlace = ihdr
    if depth != 8:
        raise FormatError(f"only 8-bit PNG supported, got depth {depth}")
    if color not in _CHANNELS:
        raise FormatError(f"unsupported PNG color type {color}")
    if interlace != 0:
        raise FormatError("interlaced PNG not supported")
    nch = _CHANNELS[color]
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise FormatError(f"PNG deflate stream corrupt: {exc}") from exc
    stride = w * nch
    if len(raw) != h * (stride + 1):
        raise TruncatedFileError("PNG pixel data has wrong length")
    img = _unfilter(np.frombuffer(raw, np.uint8).reshape(h, stride + 1), w, nch)
    img = img.reshape(h, w, nch)
    if color == 0:
        img = np.repeat(img, 3, axis=2)
    elif color == 4:
        img = np.repeat(img[:, :, :1], 3, axis=2)
    elif color == 6:
        img = img[:, :, :3]
    return np.ascontiguousarray(img)


def _unfilter(rows: np.ndarray, w: int, nch: int) -> np.ndarray:
    h = rows.shape[0]
    out = np.zeros((h, w * nch), dtype=np.uint8)
    prev = np.zeros(w * nch, dtype=np.int64)
    for y in range(h):
        ftype = int(rows[y, 0])
        cur = rows[y, 1:].astype(np.int64)
        if ftype == 0:
            rec = cur
        elif ftype == 1:  # Sub: running sum per channel lane mod 256
            rec = cur.reshape(w, nch).cumsum(axis=0).reshape(-1) % 256
        elif ftype == 2:  # Up
            rec = (cur + prev) % 256
        elif ftype == 3:  # Average
            rec = cur.copy()
            for x in range(w * nch):
                left = rec[x - nch] if x >= nch else 0
                rec[x] = (rec[x] + (left + prev[x]) // 2) % 256
        elif ftype == 4:  # Paeth
            rec = cur.copy()
            for x in range(w * nch):
                a = rec[x - nch] if x >= nch else 0
                b = prev[x]
                c = prev[x - nch] if x >= nch else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                if pa <= pb and pa <= pc:
                    pred = a
                elif pb <= pc:
                    pred = b
                else:
                    pred = c
                rec[x] = (rec[x] + pred) % 256
        else:
            raise FormatError(f"unknown PNG filter type {ftype}")
        out[y] = rec.astype(np.uint8)
        prev = rec
    return out


def _chunk(ctype: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(ctype + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + ctype + payload + struct.pack(">I", crc)


def encode_png(arr: np.ndarray) -> bytes:
    arr = _as_uint8_rgb(arr)
    h, w, _ = arr.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    rows = np.zeros((h, w * 3 + 1), dtype=np.uint8)
    rows[:, 1:] = arr.reshape(h, w * 3)
    idat = zlib.compress(rows.tobytes(), 6)
    return (_PNG_SIG + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", idat)
            + _chunk(b"IEND", b""))


# ---------------------------------------------------------------------------
# PPM (P6)

def decode_ppm(data: bytes) -> np.ndarray:
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        if pos >= len(data):
            raise TruncatedFileError("PPM header truncated")
        c = data[pos:pos + 1]
        if c == b"#":
            pos = data.index(b"\n", pos) + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            fields.append(int(data[pos:end]))
            pos = end
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"only 8-bit PPM supported, got maxval {maxval}")
    need = w * h * 3
    pix = data[pos:pos + need]
    if len(pix) != need:
        raise TruncatedFileError("PPM pixel data truncated")
    return np.frombuffer(pix, np.uint8).reshape(h, w, 3).copy()


def encode_ppm(arr: np.ndarray) -> bytes:
    arr = _as_uint8_rgb(arr)
    h, w, _ = arr.shape
    return f"P6\n{w} {h}\n255\n".encode() + arr.tobytes()


def _as_uint8_rgb(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ContractViolation(f"image writers take uint8, got {arr.dtype}")
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractViolation(f"expected (h, w, 3) image, got {arr.shape}")
    return np.ascontiguousarray(arr)


# ---------------------------------------------------------------------------
# padding

def pad_to_multiple(arr: np.ndarray, multiple: int = 64) -> np.ndarray:
    """Reflect-pad an (h, w, c) image up to multiples of `multiple`.

    Reflection is applied iteratively so images smaller than the padding
    amount are handled (the pattern keeps mirroring back and forth).
    """
    h, w = arr.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    out = arr
    tail = ((0, 0),) * (arr.ndim - 2)
    while ph > 0 or pw > 0:
        if (out.shape[0] == 1 and ph > 0) or (out.shape[1] == 1 and pw > 0):
            # a 1-pixel dimension cannot reflect; replicate the edge
            out = np.pad(out, ((0, ph), (0, pw)) + tail, mode="edge")
            break
        step_h = min(ph, out.shape[0] - 1)
        step_w = min(pw, out.shape[1] - 1)
        out = np.pad(out, ((0, step_h), (0, step_w)) + tail, mode="reflect")
        ph -= step_h
        pw -= step_w
    return out


def crop(arr: np.ndarray, h: int, w: int) -> np.ndarray:
    return np.ascontiguousarray(arr[:h, :w])
