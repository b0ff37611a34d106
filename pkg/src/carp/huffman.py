"""Canonical Huffman coding over integer symbol alphabets.

Only code lengths travel in the stream header; both sides regenerate the
actual codewords by the canonical rule (symbols sorted by length, then by
value, assigned consecutive codes).  A single-symbol alphabet is padded
with a dummy zero-frequency sibling so it still gets a 1-bit code.
"""

from __future__ import annotations

import heapq
from collections import Counter
from typing import Iterable, Mapping

from .bitio import BitReader, BitWriter
from .errors import StreamError


def build_code_lengths(freqs: Mapping[int, int]) -> dict[int, int]:
    """Optimal prefix code lengths for the given symbol frequencies."""
    if not freqs:
        raise ValueError("cannot build a Huffman code from an empty histogram")
    if len(freqs) == 1:
        return {next(iter(freqs)): 1}
    # heap entries: (frequency, tiebreak, [symbols in this subtree])
    heap = [(f, i, [s]) for i, (s, f) in enumerate(sorted(freqs.items()))]
    heapq.heapify(heap)
    lengths = {s: 0 for s in freqs}
    tiebreak = len(heap)
    while len(heap) > 1:
        fa, _, syms_a = heapq.heappop(heap)
        fb, _, syms_b = heapq.heappop(heap)
        for s in syms_a:
            lengths[s] += 1
        for s in syms_b:
            lengths[s] += 1
        heapq.heappush(heap, (fa + fb, tiebreak, syms_a + syms_b))
        tiebreak += 1
    return lengths


def kraft_sum(lengths: Mapping[int, int]) -> float:
    return sum(2.0 ** (-l) for l in lengths.values())


def canonical_codes(lengths: Mapping[int, int]) -> dict[int, tuple[int, int]]:
    """symbol -> (codeword, length), assigned in canonical order."""
    ordered = sorted(lengths.items(), key=lambda kv: (kv[1], kv[0]))
    codes: dict[int, tuple[int, int]] = {}
    code = 0
    prev_len = 0
    for sym, length in ordered:
        code <<= length - prev_len
        codes[sym] = (code, length)
        code += 1
        prev_len = length
    return codes


class CanonicalDecoder:
    """Decodes one symbol at a time from a canonical-code bitstream."""

    def __init__(self, lengths: Mapping[int, int]):
        if not lengths:
            raise StreamError("empty Huffman table")
        ordered = sorted(lengths.items(), key=lambda kv: (kv[1], kv[0]))
        self._symbols = [sym for sym, _ in ordered]
        # per distinct length: (length, first code, first symbol index, count)
        self._rows: list[tuple[int, int, int, int]] = []
        code = 0
        prev_len = 0
        index = 0
        for sym, length in ordered:
            code <<= length - prev_len
            if self._rows and self._rows[-1][0] == length:
                row = self._rows[-1]
                self._rows[-1] = (row[0], row[1], row[2], row[3] + 1)
            else:
                self._rows.append((length, code, index, 1))
            code += 1
            prev_len = length
            index += 1

    def decode_one(self, reader: BitReader) -> int:
        code = 0
        prev_len = 0
        for length, first, start, count in self._rows:
            code = (code << (length - prev_len)) | reader.read(length - prev_len)
            prev_len = length
            if first <= code < first + count:
                return self._symbols[start + (code - first)]
        raise StreamError("invalid Huffman codeword")


def encode_symbols(symbols: Iterable[int], codes: Mapping[int, tuple[int, int]],
                   writer: BitWriter) -> None:
    for sym in symbols:
        try:
            code, length = codes[sym]
        except KeyError:
            raise ValueError(f"symbol {sym} missing from Huffman table") from None
        writer.write(code, length)


def decode_symbols(reader: BitReader, lengths: Mapping[int, int],
                   count: int) -> list[int]:
    decoder = CanonicalDecoder(lengths)
    return [decoder.decode_one(reader) for _ in range(count)]


def histogram(symbols: Iterable[int]) -> dict[int, int]:
    return dict(Counter(symbols))
