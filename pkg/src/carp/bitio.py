"""Bit-packed reader/writer, MSB-first within each byte."""

from __future__ import annotations

from .errors import StreamError


class BitWriter:
    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._nbits = 0
        self._total = 0

    def write(self, value: int, nbits: int) -> None:
        if nbits < 0 or value < 0 or nbits < value.bit_length():
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        self._acc = (self._acc << nbits) | (value & ((1 << nbits) - 1))
        self._nbits += nbits
        self._total += nbits
        while self._nbits >= 8:
            self._nbits -= 8
            self._bytes.append((self._acc >> self._nbits) & 0xFF)
        self._acc &= (1 << self._nbits) - 1

    def write_bit(self, bit: int) -> None:
        self.write(bit & 1, 1)

    @property
    def bit_length(self) -> int:
        return self._total

    def getvalue(self) -> bytes:
        """Packed bytes; the final partial byte is zero-padded on the right."""
        out = bytearray(self._bytes)
        if self._nbits:
            out.append((self._acc << (8 - self._nbits)) & 0xFF)
        return bytes(out)


class BitReader:
    def __init__(self, data: bytes, nbits: int | None = None):
        self._data = data
        self._limit = 8 * len(data) if nbits is None else nbits
        if self._limit > 8 * len(data):
            raise StreamError(f"bit length {self._limit} exceeds buffer size")
        self._pos = 0

    @property
    def pos(self) -> int:
        return self._pos

    @property
    def remaining(self) -> int:
        return self._limit - self._pos

    def read_bit(self) -> int:
        if self._pos >= self._limit:
            raise StreamError("bitstream exhausted")
        byte = self._data[self._pos >> 3]
        bit = (byte >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit

    def read(self, nbits: int) -> int:
        if self._pos + nbits > self._limit:
            raise StreamError("bitstream exhausted")
        value = 0
        pos = self._pos
        data = self._data
        for _ in range(nbits):
            value = (value << 1) | ((data[pos >> 3] >> (7 - (pos & 7))) & 1)
            pos += 1
        self._pos = pos
        return value
