"""On-disk compressed-image container.

Byte-exact layout, all integers little-endian:

    offset  size  field
    0       4     magic "C2F1"
    4       2     version (u16, currently 1)
    6       32    model_id (sha-256 of the weights file)
    38      4     orig_w (u32)
    42      4     orig_h (u32)
    46      4     pad_w (u32, multiple of 64)
    50      4     pad_h (u32, multiple of 64)
    54      2     lambda_tag (u16, round(10000 * lambda))
    56      8     z stream length (u64)
    64      8     y stream length (u64)
    72      8     x stream length (u64)
    80      -     Z stream bytes, then Y, then X, no padding between

Decoding order Z -> Y -> X is forced by construction: the Y tables are
predicted from the decoded Z, and the X tables from the decoded Y.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import (BadMagicError, ContractViolation, TruncatedFileError,
                     VersionMismatchError)

MAGIC = b"C2F1"
VERSION = 1
_FMT = "<4sH32sIIIIHQQQ"
HEADER_SIZE = struct.calcsize(_FMT)
assert HEADER_SIZE == 80


@dataclass
class ContainerHeader:
    model_id: bytes      # 32-byte digest
    orig_w: int
    orig_h: int
    pad_w: int
    pad_h: int
    lambda_tag: int
    z_len: int = 0
    y_len: int = 0
    x_len: int = 0
    version: int = VERSION

    def validate(self) -> "ContainerHeader":
        if len(self.model_id) != 32:
            raise ContractViolation("model_id must be a 32-byte digest")
        if self.pad_w % 64 or self.pad_h % 64:
            raise ContractViolation("padded dims must be multiples of 64")
        if self.pad_w < self.orig_w or self.pad_h < self.orig_h:
            raise ContractViolation("padded dims must cover the original image")
        if not (0 <= self.lambda_tag < 1 << 16):
            raise ContractViolation("lambda_tag out of u16 range")
        return self


def write_container(header: ContainerHeader, zbytes: bytes, ybytes: bytes,
                    xbytes: bytes) -> bytes:
    header.z_len, header.y_len, header.x_len = len(zbytes), len(ybytes), len(xbytes)
    header.validate()
    packed = struct.pack(
        _FMT, MAGIC, header.version, header.model_id,
        header.orig_w, header.orig_h, header.pad_w, header.pad_h,
        header.lambda_tag, header.z_len, header.y_len, header.x_len)
    return packed + zbytes + ybytes + xbytes


def read_container(data: bytes) -> tuple[ContainerHeader, bytes, bytes, bytes]:
    if len(data) < HEADER_SIZE:
        raise TruncatedFileError(
            f"container shorter than its {HEADER_SIZE}-byte header ({len(data)} bytes)")
    (magic, version, model_id, orig_w, orig_h, pad_w, pad_h,
     lambda_tag, z_len, y_len, x_len) = struct.unpack_from(_FMT, data)
    if magic != MAGIC:
        raise BadMagicError(f"bad container magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"container version {version}, expected {VERSION}")
    end = HEADER_SIZE + z_len + y_len + x_len
    if len(data) != end:
        raise TruncatedFileError(
            f"container payload is {len(data) - HEADER_SIZE} bytes, header says {end - HEADER_SIZE}")
    header = ContainerHeader(model_id, orig_w, orig_h, pad_w, pad_h,
                             lambda_tag, z_len, y_len, x_len, version).validate()
    z0 = HEADER_SIZE
    y0 = z0 + z_len
    x0 = y0 + y_len
    return header, data[z0:y0], data[y0:x0], data[x0:end]
