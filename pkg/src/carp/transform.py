"""Orthonormal 1D Haar analysis/synthesis and the dead-zone quantizer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT2 = math.sqrt(2.0)


@dataclass
class CoefficientPyramid:
    """Haar decomposition of a length-2^J vector.

    details[j] holds the 2^j detail coefficients of scale j; scale 0 is the
    coarsest.  Together with the single scaling coefficient the pyramid has
    exactly as many entries as the input, and preserves its energy.
    """

    scaling: float
    details: list[np.ndarray]

    @property
    def n_scales(self) -> int:
        return len(self.details)

    @property
    def n(self) -> int:
        return 1 + sum(d.size for d in self.details)

    def energy(self) -> float:
        return self.scaling**2 + sum(float(np.sum(d * d)) for d in self.details)


def haar_forward(v: np.ndarray) -> CoefficientPyramid:
    v = np.asarray(v, dtype=np.float64)
    n = v.size
    if n == 0 or n & (n - 1):
        raise ValueError(f"length must be a power of two, got {n}")
    details: list[np.ndarray] = []
    approx = v
    while approx.size > 1:
        a, b = approx[0::2], approx[1::2]
        details.append((a - b) / SQRT2)
        approx = (a + b) / SQRT2
    details.reverse()  # coarsest first
    return CoefficientPyramid(scaling=float(approx[0]), details=details)


def haar_inverse(p: CoefficientPyramid) -> np.ndarray:
    approx = np.array([p.scaling], dtype=np.float64)
    for d in p.details:
        if d.size != approx.size:
            raise ValueError(
                f"detail scale of size {d.size} does not match approx {approx.size}"
            )
        out = np.empty(2 * approx.size, dtype=np.float64)
        out[0::2] = (approx + d) / SQRT2
        out[1::2] = (approx - d) / SQRT2
        approx = out
    return approx


def quantize(coefficients: np.ndarray | float, q: float) -> np.ndarray:
    """Dead-zone uniform quantizer: sign(c) * floor(|c| / q).

    Everything in (-q, q) maps to symbol 0, so the zero bin is twice as
    wide as the others.
    """
    if q <= 0:
        raise ValueError(f"quantizer step must be positive, got {q}")
    c = np.asarray(coefficients, dtype=np.float64)
    return (np.sign(c) * np.floor(np.abs(c) / q)).astype(np.int64)


def dequantize(symbols: np.ndarray | int, q: float) -> np.ndarray:
    """Midpoint reconstruction: sign(s) * (|s| + 0.5) * q, with 0 -> 0."""
    if q <= 0:
        raise ValueError(f"quantizer step must be positive, got {q}")
    s = np.asarray(symbols, dtype=np.float64)
    return np.sign(s) * (np.abs(s) + 0.5) * q
