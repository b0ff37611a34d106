import itertools

import numpy as np
import pytest

from carp import (Block, DimensionError, PixelGrid, ResourceError, build_stats,
                  children, divisible_dims, haar_coefficient, pad)
from carp.lattice import root_block

from conftest import random_grid


def grid_of(arr):
    return PixelGrid.from_array(np.asarray(arr, dtype=float))


class TestBlockOps:
    def test_divisible_dims(self):
        assert divisible_dims(Block((0, 0), (4, 1), 0)) == (0,)
        assert divisible_dims(Block((0, 0), (1, 1), 0)) == ()
        assert divisible_dims(Block((0, 0, 0), (2, 4, 2), 0)) == (0, 1, 2)

    def test_children_halve_rows(self):
        left, right = children(Block((0, 0), (2, 2), 0), 0)
        assert left == Block((0, 0), (1, 2), 1)
        assert right == Block((1, 0), (1, 2), 1)

    def test_children_of_1x2_are_atomic(self):
        left, right = children(Block((0, 0), (1, 2), 3), 1)
        assert left.is_atomic and right.is_atomic
        assert (left.offset, right.offset) == ((0, 0), (0, 1))

    def test_atomic_has_no_children(self):
        with pytest.raises(ValueError):
            children(Block((0, 0), (1, 1), 4), 0)


class TestHaarCoefficient:
    def test_two_pixels(self):
        stats = build_stats(grid_of([[4.0, 2.0]]))
        w = haar_coefficient(Block((0, 0), (1, 2), 0), 1, stats)
        assert w == pytest.approx((4 - 2) / np.sqrt(2), rel=1e-12)

    def test_constant_block_is_zero(self):
        stats = build_stats(grid_of(np.full((4, 4), 9.0)))
        for d in (0, 1):
            assert haar_coefficient(root_block((4, 4)), d, stats) == 0.0

    def test_2x2_row_split(self):
        stats = build_stats(grid_of([[1.0, 2.0], [3.0, 4.0]]))
        w = haar_coefficient(root_block((2, 2)), 0, stats)
        assert w == pytest.approx((3 - 7) / 2.0, rel=1e-12)


class TestBuildStats:
    def test_sst_1x4(self):
        stats = build_stats(grid_of([[1.0, 2.0, 3.0, 4.0]]))
        assert stats.stats_for(root_block((1, 4))).sst == pytest.approx(5.0)

    def test_constant_image_all_sst_zero(self):
        stats = build_stats(grid_of(np.full((4, 8), 3.0)))
        for shape in stats.shapes:
            assert np.all(stats.ssts[shape] == 0.0)

    def test_requires_padded_grid(self):
        grid = PixelGrid.from_array(np.zeros((3, 5)))
        with pytest.raises(DimensionError):
            build_stats(grid)
        build_stats(pad(grid))  # fine once padded

    def test_node_count(self):
        stats = build_stats(grid_of(np.zeros((4, 8))))
        assert stats.node_count == (2 * 4 - 1) * (2 * 8 - 1)
        total = sum(int(np.prod(stats.grid_shape(s))) for s in stats.shapes)
        assert total == stats.node_count

    def test_memory_budget(self):
        with pytest.raises(ResourceError, match="blocks"):
            build_stats(grid_of(np.zeros((64, 64))), max_bytes=1024)

    def test_against_direct_recomputation(self):
        rng = np.random.default_rng(21)
        grid = random_grid(rng, (8, 4))
        stats = build_stats(grid)
        plane = grid.values[0]
        for shape in stats.shapes:
            extent = tuple(1 << a for a in shape)
            for idx in itertools.product(*(range(c) for c in stats.grid_shape(shape))):
                off = tuple(i * e for i, e in zip(idx, extent))
                view = plane[tuple(slice(o, o + e) for o, e in zip(off, extent))]
                block = Block(off, extent, stats.level_of_shape(shape))
                got = stats.stats_for(block)
                assert got.sum == pytest.approx(view.sum(), rel=1e-12)
                direct_sst = float(np.sum((view - view.mean()) ** 2))
                assert got.sst == pytest.approx(direct_sst, rel=1e-12, abs=1e-9)


class TestSplitIdentity:
    @pytest.mark.parametrize("shape", [(4, 4), (8, 8, 8)])
    def test_energy_decomposition(self, shape):
        rng = np.random.default_rng(5 + len(shape))
        grid = random_grid(rng, shape)
        stats = build_stats(grid)
        for s in stats.shapes:
            if sum(s) == 0:
                continue
            level = stats.level_of_shape(s)
            parent_sst = stats.ssts[s]
            for d in [i for i, a in enumerate(s) if a > 0]:
                child = tuple(a - 1 if i == d else a for i, a in enumerate(s))
                ct = stats.ssts[child]
                left = tuple(slice(None) if i != d else slice(0, None, 2)
                             for i in range(stats.m))
                right = tuple(slice(None) if i != d else slice(1, None, 2)
                              for i in range(stats.m))
                w = stats.haar_array(s, d)
                recon = ct[left] + ct[right] + w * w
                np.testing.assert_allclose(parent_sst, recon, rtol=1e-9, atol=1e-9)
            assert level == stats.j_total - sum(s)

    def test_child_sums_are_exact(self):
        rng = np.random.default_rng(17)
        grid = random_grid(rng, (8, 8))
        stats = build_stats(grid)
        for s in stats.shapes:
            for d in [i for i, a in enumerate(s) if a > 0]:
                sl, sr = stats.child_sum_arrays(s, d)
                np.testing.assert_allclose(stats.sums[s], sl + sr, rtol=1e-12)
