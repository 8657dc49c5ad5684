"""Bit-exact 64-bit range coder over integer CDF tables.

Carry-less byte-wise renormalization: a byte is emitted once the top
byte of the coding interval is settled, and the range is truncated on
the rare underflow where it straddles a byte boundary.  Probabilities
are 16-bit (every table totals 65536) and every bin has frequency >= 1,
so any symbol a table admits can be coded.  Encoder and decoder walk
through identical (low, range) states, which makes the byte stream an
exact prefix-free record: decoding reads exactly the bytes encoding
wrote, and a truncated stream always surfaces as CorruptStreamError.

Tables may carry an escape bin as their last entry; escaped values are
followed by four bypass bytes holding the value as two's-complement
int32 under a fixed uniform model.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ContractViolation, CorruptStreamError

__all__ = ["CdfTable", "RangeEncoder", "RangeDecoder", "encode", "decode",
           "CDF_TOTAL", "BYPASS_TABLE"]

CDF_TOTAL = 1 << 16

_MASK = (1 << 64) - 1
_TOP = 1 << 56
_BOT = 1 << 48
_FLUSH_BYTES = 8


class CdfTable:
    """Integer CDF over a contiguous symbol alphabet starting at smin.

    `cum` has one more entry than there are bins, starts at 0, is strictly
    increasing (every bin holds frequency >= 1) and ends exactly at 65536.
    If `has_escape` is set, the final bin codes out-of-alphabet values.
    """

    __slots__ = ("smin", "cum", "has_escape")

    def __init__(self, smin: int, cum, has_escape: bool = False):
        self.smin = int(smin)
        self.cum = np.asarray(cum, dtype=np.int64)
        self.has_escape = bool(has_escape)

    @property
    def nbins(self) -> int:
        return len(self.cum) - 1

    @property
    def nsymbols(self) -> int:
        return self.nbins - (1 if self.has_escape else 0)

    @property
    def smax(self) -> int:
        return self.smin + self.nsymbols - 1

    def validate(self) -> "CdfTable":
        if self.cum.ndim != 1 or self.nbins < 1:
            raise ContractViolation("cdf table needs at least one bin")
        if self.cum[0] != 0 or self.cum[-1] != CDF_TOTAL:
            raise ContractViolation("cdf must run from 0 to 65536")
        if not np.all(np.diff(self.cum) >= 1):
            raise ContractViolation("cdf must be strictly increasing (freq >= 1)")
        return self

    def index_of(self, value: int) -> int:
        off = value - self.smin
        if 0 <= off < self.nsymbols:
            return off
        if self.has_escape:
            return self.nsymbols
        raise ContractViolation(
            f"symbol {value} outside alphabet [{self.smin}, {self.smax}] with no escape bin")

    def value_of(self, index: int) -> int:
        return self.smin + index


# fixed uniform byte model used for escape payloads
BYPASS_TABLE = CdfTable(0, np.arange(0, CDF_TOTAL + 256, 256, dtype=np.int64))

_INT32_LO, _INT32_HI = -(1 << 31), (1 << 31) - 1


class RangeEncoder:
    """Single-use encoder state machine; call finish() exactly once."""

    def __init__(self):
        self.low = 0
        self.rng = _MASK
        self.out = bytearray()
        self._finished = False

    def _normalize(self) -> None:
        low, rng, out = self.low, self.rng, self.out
        while True:
            if (low ^ (low + rng)) < _TOP:
                pass
            elif rng < _BOT:
                rng = (-low) & (_BOT - 1)
            else:
                break
            out.append((low >> 56) & 0xFF)
            low = (low << 8) & _MASK
            rng <<= 8
        self.low, self.rng = low, rng

    def _encode_freq(self, cum_lo: int, cum_hi: int, total: int) -> None:
        r = self.rng // total
        self.low += cum_lo * r
        self.rng = (cum_hi - cum_lo) * r
        self._normalize()

    def encode(self, value: int, table: CdfTable) -> None:
        if self._finished:
            raise ContractViolation("encoder already finished")
        idx = table.index_of(value)
        cum = table.cum
        self._encode_freq(int(cum[idx]), int(cum[idx + 1]), int(cum[-1]))
        if table.has_escape and idx == table.nsymbols:
            if not (_INT32_LO <= value <= _INT32_HI):
                raise ContractViolation(f"escape value {value} exceeds int32")
            u = value & 0xFFFFFFFF
            bcum = BYPASS_TABLE.cum
            for shift in (24, 16, 8, 0):
                byte = (u >> shift) & 0xFF
                self._encode_freq(int(bcum[byte]), int(bcum[byte + 1]), CDF_TOTAL)

    def finish(self) -> bytes:
        if self._finished:
            raise ContractViolation("encoder already finished")
        self._finished = True
        low = self.low
        for _ in range(_FLUSH_BYTES):
            self.out.append((low >> 56) & 0xFF)
            low = (low << 8) & _MASK
        return bytes(self.out)


class RangeDecoder:
    """Single-use decoder over a byte stream produced by RangeEncoder."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.low = 0
        self.rng = _MASK
        self.code: int | None = None

    def _byte(self) -> int:
        if self.pos >= len(self.data):
            raise CorruptStreamError(
                f"stream exhausted at byte {self.pos} of {len(self.data)}")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def _init_code(self) -> None:
        code = 0
        for _ in range(_FLUSH_BYTES):
            code = (code << 8) | self._byte()
        self.code = code

    def _normalize(self) -> None:
        low, rng, code = self.low, self.rng, self.code
        while True:
            if (low ^ (low + rng)) < _TOP:
                pass
            elif rng < _BOT:
                rng = (-low) & (_BOT - 1)
            else:
                break
            code = ((code << 8) & _MASK) | self._byte()
            low = (low << 8) & _MASK
            rng <<= 8
        self.low, self.rng, self.code = low, rng, code

    def _decode_target(self, total: int) -> tuple[int, int]:
        if self.code is None:
            self._init_code()
        r = self.rng // total
        target = ((self.code - self.low) & _MASK) // r
        return min(target, total - 1), r

    def _consume(self, cum_lo: int, cum_hi: int, r: int) -> None:
        self.low += cum_lo * r
        self.rng = (cum_hi - cum_lo) * r
        self._normalize()

    def decode(self, table: CdfTable) -> int:
        cum = table.cum
        target, r = self._decode_target(int(cum[-1]))
        idx = int(np.searchsorted(cum, target, side="right")) - 1
        self._consume(int(cum[idx]), int(cum[idx + 1]), r)
        if table.has_escape and idx == table.nsymbols:
            u = 0
            bcum = BYPASS_TABLE.cum
            for _ in range(4):
                t, rb = self._decode_target(CDF_TOTAL)
                byte = int(t) >> 8  # uniform bins of width 256
                self._consume(int(bcum[byte]), int(bcum[byte + 1]), rb)
                u = (u << 8) | byte
            return u - (1 << 32) if u > _INT32_HI else u
        return table.value_of(idx)


def encode(symbols: Sequence[int], tables: Sequence[CdfTable]) -> bytes:
    """Encode one stream; symbols[i] is coded with tables[i]."""
    if len(symbols) != len(tables):
        raise ContractViolation(
            f"{len(symbols)} symbols but {len(tables)} tables")
    enc = RangeEncoder()
    for value, table in zip(symbols, tables):
        enc.encode(int(value), table)
    return enc.finish()


def decode(data: bytes, tables: Sequence[CdfTable], n: int) -> list[int]:
    """Decode exactly n symbols; inverse of encode() for identical tables."""
    if n != len(tables):
        raise ContractViolation(f"n={n} but {len(tables)} tables supplied")
    dec = RangeDecoder(data)
    return [dec.decode(table) for table in tables]
