"""Shared fixtures: deterministic synthetic photographs and small images."""

import numpy as np
import pytest

from carp import PixelGrid


def _spectral_field(rng, size: int, exponent: float) -> np.ndarray:
    """Random field with a 1/f^exponent amplitude spectrum, scaled to [0, 1]."""
    freq = np.fft.fftfreq(size)
    fy, fx = np.meshgrid(freq, freq, indexing="ij")
    radius = np.hypot(fy, fx)
    spectrum = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    spectrum /= np.maximum(radius, 1.0 / size) ** exponent
    field = np.real(np.fft.ifft2(spectrum))
    return (field - field.min()) / (field.max() - field.min())


def synthetic_photo(size: int = 512, seed: int = 7, bit_depth: int = 8) -> PixelGrid:
    """Deterministic photograph-like test image.

    Piecewise-smooth composition in the spirit of a landscape shot: a very
    smooth illumination layer, mid- and fine-frequency texture confined to
    a foreground band, and a few hard-edged patches, rounded to the
    integer sample grid.
    """
    rng = np.random.default_rng(seed)
    smooth = _spectral_field(rng, size, 2.5)
    mid = _spectral_field(rng, size, 1.4)
    fine = _spectral_field(rng, size, 0.8)
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size),
                         indexing="ij")
    texture_mask = np.clip(1.6 * (yy - 0.45), 0.0, 1.0) ** 1.2
    img = (0.55 * smooth + 0.18 * (0.5 * yy + 0.5 * xx)
           + texture_mask * (0.22 * mid + 0.10 * (fine - 0.5)))

    h = size // 8
    img[h : 3 * h, h : 2 * h] += 0.15
    img[5 * h : 7 * h, 4 * h : 6 * h] -= 0.12
    disk = (yy - 0.28) ** 2 + (xx - 0.72) ** 2 < 0.015
    img[disk] += 0.10

    img = np.clip(img, 0.0, 1.0)
    peak = 2**bit_depth - 1
    ints = np.rint(img * peak)
    return PixelGrid.from_array(ints, bit_depth=bit_depth)


@pytest.fixture(scope="session")
def photo512() -> PixelGrid:
    return synthetic_photo(512, seed=7)


@pytest.fixture(scope="session")
def photo512_b() -> PixelGrid:
    return synthetic_photo(512, seed=11)


@pytest.fixture(scope="session")
def photo256() -> PixelGrid:
    return synthetic_photo(256, seed=7)


@pytest.fixture(scope="session")
def photo64() -> PixelGrid:
    return synthetic_photo(64, seed=3)


def random_grid(rng, shape, bit_depth=8, channels=1) -> PixelGrid:
    peak = 2**bit_depth - 1
    vals = rng.integers(0, peak + 1, size=(channels,) + tuple(shape)).astype(float)
    return PixelGrid(values=vals, dims_original=tuple(shape), bit_depth=bit_depth)
