import numpy as np
import pytest

from carp import dequantize, haar_forward, haar_inverse, quantize


class TestHaar:
    def test_constant_vector(self):
        p = haar_forward(np.ones(4))
        assert p.scaling == pytest.approx(2.0)
        assert all(np.allclose(d, 0.0) for d in p.details)

    def test_two_point(self):
        p = haar_forward(np.array([1.0, -1.0]))
        assert p.scaling == pytest.approx(0.0)
        assert p.details[0][0] == pytest.approx(np.sqrt(2.0))

    def test_scale_sizes(self):
        p = haar_forward(np.arange(16.0))
        assert [d.size for d in p.details] == [1, 2, 4, 8]
        assert p.n == 16

    @pytest.mark.parametrize("k", [0, 1, 5, 10])
    def test_roundtrip(self, k):
        rng = np.random.default_rng(k)
        v = rng.normal(scale=100.0, size=2**k)
        back = haar_inverse(haar_forward(v))
        assert np.max(np.abs(back - v)) < 1e-10

    def test_energy_preservation(self):
        rng = np.random.default_rng(3)
        v = rng.normal(scale=50.0, size=1024)
        p = haar_forward(v)
        assert p.energy() == pytest.approx(float(np.sum(v * v)), rel=1e-9)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            haar_forward(np.zeros(6))
        with pytest.raises(ValueError):
            haar_forward(np.zeros(0))


class TestQuantizer:
    def test_dead_zone(self):
        assert quantize(0.4, 1.0) == 0
        assert quantize(-0.9, 1.0) == 0
        assert dequantize(0, 1.0) == 0.0

    def test_midpoint_reconstruction(self):
        assert quantize(2.5, 1.0) == 2
        assert dequantize(2, 1.0) == pytest.approx(2.5)
        assert quantize(-2.5, 1.0) == -2
        assert dequantize(-2, 1.0) == pytest.approx(-2.5)

    def test_error_bounds(self):
        rng = np.random.default_rng(4)
        q = 0.75
        c = rng.uniform(-50, 50, size=20000)
        err = np.abs(dequantize(quantize(c, q), q) - c)
        assert np.all(err <= q + 1e-12)
        outside = np.abs(c) >= q
        assert np.all(err[outside] <= q / 2 + 1e-12)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            quantize(np.zeros(2), 0.0)
        with pytest.raises(ValueError):
            dequantize(np.zeros(2, dtype=np.int64), -1.0)
