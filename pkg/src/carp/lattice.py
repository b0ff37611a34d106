"""Dyadic block lattice and per-block aggregate statistics.

Every partition tree of the padded pixel space draws its nodes from one
shared pool: the set of axis-aligned blocks whose extent along axis i is a
power of two 2^a_i and whose offset is a multiple of that extent.  The same
block is reachable through many ancestor split orders, so aggregates are
memoized per block, not per tree.  Blocks are grouped by extent shape
(a_1, ..., a_m) and each shape is stored as one dense array indexed by the
block's grid position, which keeps the whole sweep vectorized.

Sums and corrected sums of squares are accumulated bottom-up from atomic
blocks via the split identity

    sst(A) = sst(A_left) + sst(A_right) + w_d(A)^2

with w_d(A) = (sum(A_left) - sum(A_right)) / sqrt(|A|), which is numerically
stable on large flat regions where the textbook sum-of-squares formula
cancels catastrophically.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ResourceError
from .grid import PixelGrid

# sum + sst arrays, 8 bytes each
_BYTES_PER_NODE = 16
DEFAULT_MAX_BYTES = 4 << 30


@dataclass(frozen=True)
class Block:
    """A dyadic sub-rectangle of the padded pixel space.

    offset[i] is a multiple of extent[i]; level counts split steps from the
    root, so level == J exactly when the block is a single pixel.
    """

    offset: tuple[int, ...]
    extent: tuple[int, ...]
    level: int

    @property
    def size(self) -> int:
        return int(np.prod(self.extent))

    @property
    def is_atomic(self) -> bool:
        return all(e == 1 for e in self.extent)

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(o, o + e) for o, e in zip(self.offset, self.extent))


def divisible_dims(block: Block) -> tuple[int, ...]:
    """Axes along which the block can still be halved (extent > 1)."""
    return tuple(i for i, e in enumerate(block.extent) if e > 1)


def children(block: Block, d: int) -> tuple[Block, Block]:
    """Split along axis d; the lower-coordinate half is the left child."""
    if block.extent[d] < 2:
        raise ValueError(f"axis {d} of extent {block.extent} is not divisible")
    half = block.extent[d] // 2
    ext = tuple(e if i != d else half for i, e in enumerate(block.extent))
    off_r = tuple(o if i != d else o + half for i, o in enumerate(block.offset))
    return (
        Block(offset=block.offset, extent=ext, level=block.level + 1),
        Block(offset=off_r, extent=ext, level=block.level + 1),
    )


def root_block(dims_padded: tuple[int, ...]) -> Block:
    return Block(offset=tuple(0 for _ in dims_padded), extent=tuple(dims_padded), level=0)


@dataclass(frozen=True)
class BlockStats:
    """Aggregates of one block: intensity sum, corrected sum of squares, size."""

    sum: float
    sst: float
    size: int


def _check_pow2_dims(dims: tuple[int, ...]) -> list[int]:
    exps = []
    for d in dims:
        e = int(d).bit_length() - 1
        if d < 1 or (1 << e) != d:
            raise DimensionError(f"lattice requires power-of-two dims, got {dims}")
        exps.append(e)
    return exps


class StatsLattice:
    """Per-block sums and SSTs over the whole lattice of one image plane.

    Shapes are exponent tuples a = (a_1, ..., a_m); the dense array for a
    shape has one entry per block of that extent, indexed by offset >> a.
    """

    def __init__(self, plane: np.ndarray, max_bytes: int = DEFAULT_MAX_BYTES):
        plane = np.asarray(plane, dtype=np.float64)
        self.dims: tuple[int, ...] = plane.shape
        self.axis_exps: list[int] = _check_pow2_dims(self.dims)
        self.j_total: int = sum(self.axis_exps)
        self.m: int = len(self.dims)

        node_count = self.node_count
        estimate = node_count * _BYTES_PER_NODE
        if estimate > max_bytes:
            raise ResourceError(
                f"lattice would hold {node_count} blocks "
                f"(~{estimate / 2**20:.0f} MiB of aggregates), over the "
                f"{max_bytes / 2**20:.0f} MiB budget"
            )

        # shapes ordered smallest blocks first so children always exist
        self.shapes: list[tuple[int, ...]] = sorted(
            itertools.product(*(range(e + 1) for e in self.axis_exps)),
            key=sum,
        )
        self.sums: dict[tuple[int, ...], np.ndarray] = {}
        self.ssts: dict[tuple[int, ...], np.ndarray] = {}
        self._build(plane)

    @property
    def node_count(self) -> int:
        return int(np.prod([2 ** (e + 1) - 1 for e in self.axis_exps]))

    def level_of_shape(self, shape: tuple[int, ...]) -> int:
        return self.j_total - sum(shape)

    def grid_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(n >> a for n, a in zip(self.dims, shape))

    def _build(self, plane: np.ndarray) -> None:
        for shape in self.shapes:
            total = sum(shape)
            if total == 0:
                self.sums[shape] = plane.copy()
                self.ssts[shape] = np.zeros_like(plane)
                continue
            d = next(i for i, a in enumerate(shape) if a > 0)
            child = tuple(a - 1 if i == d else a for i, a in enumerate(shape))
            cs, ct = self.sums[child], self.ssts[child]
            left = tuple(slice(None) if i != d else slice(0, None, 2) for i in range(self.m))
            right = tuple(slice(None) if i != d else slice(1, None, 2) for i in range(self.m))
            sum_l, sum_r = cs[left], cs[right]
            w = (sum_l - sum_r) / math.sqrt(float(2 ** total))
            self.sums[shape] = sum_l + sum_r
            self.ssts[shape] = ct[left] + ct[right] + w * w

    # -- per-block access ---------------------------------------------------

    def shape_of(self, block: Block) -> tuple[int, ...]:
        return tuple(int(e).bit_length() - 1 for e in block.extent)

    def index_of(self, block: Block) -> tuple[int, ...]:
        shape = self.shape_of(block)
        return tuple(o >> a for o, a in zip(block.offset, shape))

    def stats_for(self, block: Block) -> BlockStats:
        shape = self.shape_of(block)
        idx = self.index_of(block)
        return BlockStats(
            sum=float(self.sums[shape][idx]),
            sst=float(self.ssts[shape][idx]),
            size=block.size,
        )

    def child_sum_arrays(self, shape: tuple[int, ...], d: int
                         ) -> tuple[np.ndarray, np.ndarray]:
        """Left/right child sums of every block of this shape, split on d."""
        child = tuple(a - 1 if i == d else a for i, a in enumerate(shape))
        cs = self.sums[child]
        left = tuple(slice(None) if i != d else slice(0, None, 2) for i in range(self.m))
        right = tuple(slice(None) if i != d else slice(1, None, 2) for i in range(self.m))
        return cs[left], cs[right]

    def haar_array(self, shape: tuple[int, ...], d: int) -> np.ndarray:
        """w_d(A) for every block of this shape at once."""
        sum_l, sum_r = self.child_sum_arrays(shape, d)
        return (sum_l - sum_r) / math.sqrt(float(2 ** sum(shape)))


def haar_coefficient(block: Block, d: int, stats: StatsLattice) -> float:
    """Scaled child-sum difference (sum_left - sum_right) / sqrt(|A|)."""
    if block.extent[d] < 2:
        raise ValueError(f"axis {d} of extent {block.extent} is not divisible")
    left, right = children(block, d)
    return (stats.stats_for(left).sum - stats.stats_for(right).sum) / math.sqrt(block.size)


def build_stats(grid: PixelGrid, max_bytes: int = DEFAULT_MAX_BYTES) -> StatsLattice:
    """Aggregate sums and SSTs for every lattice block of the padded grid.

    Multi-channel grids are reduced to their per-pixel channel mean, the
    plane the shared partition tree is inferred from.
    """
    if not grid.is_padded:
        raise DimensionError(f"grid dims {grid.dims} are not padded to {grid.dims_padded}")
    return StatsLattice(grid.mean_plane(), max_bytes=max_bytes)
