"""MAP partition tree extraction and the induced pixel permutation.

A bottom-up dynamic program computes, for every lattice block, the largest
posterior mass any pruned partition subtree rooted there can achieve
(kappa, stored as log kappa to survive deep trees).  A single top-down pass
then reads off the maximizer: at each block the best split axis is

    d_hat = argmax_d  split_post(A, d) * kappa(A_left) * kappa(A_right)

and the block becomes a leaf iff the stop branch strictly beats it,

    prune_post(A) > (1 - prune_post(A)) * split_post(A, d_hat)
                    * kappa(A_left) * kappa(A_right).

At exact equality the block is split.  Axis ties resolve to the lowest
index; both rules are fixed so identical inputs always produce identical
trees and therefore bit-identical streams.

Blocks where partitioning stops are kept as leaves rather than expanded
further: the reconstruction is constant on them, so nothing observable
depends on how they would be subdivided.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import Block, children, divisible_dims, root_block
from .model import PosteriorLattice


@dataclass(eq=True)
class TreeNode:
    block: Block
    split_axis: int | None = None  # None for leaves
    pruned: bool = False
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.split_axis is None


@dataclass
class MapTree:
    """Binary partition tree over the padded pixel space."""

    root: TreeNode
    dims_padded: tuple[int, ...]

    def iter_nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    def leaves(self) -> list[TreeNode]:
        """Leaf blocks in depth-first (left before right) order."""
        out: list[TreeNode] = []

        def walk(node: TreeNode) -> None:
            if node.is_leaf:
                out.append(node)
            else:
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return out

    def pruned_blocks(self) -> list[Block]:
        """Maximal blocks where partitioning stopped early."""
        return [leaf.block for leaf in self.leaves() if leaf.pruned]

    def node_counts(self) -> dict[str, int]:
        internal = pruned = atomic = 0
        for node in self.iter_nodes():
            if not node.is_leaf:
                internal += 1
            elif node.pruned:
                pruned += 1
            else:
                atomic += 1
        return {
            "internal": internal,
            "pruned_leaves": pruned,
            "atomic_leaves": atomic,
            "total": internal + pruned + atomic,
        }

    def pruned_pixel_fraction(self) -> float:
        n = int(np.prod(self.dims_padded))
        covered = sum(b.size for b in self.pruned_blocks())
        return covered / n


@dataclass(frozen=True)
class Permutation:
    """Bijection between tree order and row-major pixel order."""

    order: np.ndarray    # order[i] = flat row-major index of the i-th pixel
    inverse: np.ndarray  # inverse[order[i]] = i

    def __post_init__(self) -> None:
        self.order.setflags(write=False)
        self.inverse.setflags(write=False)


def compute_kappa(lattice: PosteriorLattice) -> dict[tuple[int, ...], np.ndarray]:
    """Fill lattice.log_kappa bottom-up over the block DAG."""
    if lattice.log_kappa is not None:
        return lattice.log_kappa
    stats = lattice.stats
    log_kappa: dict[tuple[int, ...], np.ndarray] = {}
    for shape in stats.shapes:
        div = [i for i, a in enumerate(shape) if a > 0]
        if not div:
            log_kappa[shape] = np.zeros(stats.grid_shape(shape))
            continue
        best = None
        for d in div:
            child = tuple(a - 1 if i == d else a for i, a in enumerate(shape))
            kc = log_kappa[child]
            left = tuple(slice(None) if i != d else slice(0, None, 2)
                         for i in range(stats.m))
            right = tuple(slice(None) if i != d else slice(1, None, 2)
                          for i in range(stats.m))
            t = lattice.log_split[(shape, d)] + kc[left] + kc[right]
            best = t if best is None else np.maximum(best, t)
        log_kappa[shape] = np.maximum(
            lattice.log_prune[shape], lattice.log_not_prune[shape] + best
        )
    lattice.log_kappa = log_kappa
    return log_kappa


def extract_map_tree(lattice: PosteriorLattice) -> MapTree:
    """Top-down generation of the posterior-maximizing partition tree."""
    log_kappa = compute_kappa(lattice)
    stats = lattice.stats

    def kappa_at(block: Block) -> float:
        shape = stats.shape_of(block)
        return float(log_kappa[shape][stats.index_of(block)])

    def build(block: Block) -> TreeNode:
        div = divisible_dims(block)
        if not div:
            return TreeNode(block=block)
        shape = stats.shape_of(block)
        idx = stats.index_of(block)
        best_d, best_t, best_kids = -1, -np.inf, None
        for d in div:
            kids = children(block, d)
            t = (float(lattice.log_split[(shape, d)][idx])
                 + kappa_at(kids[0]) + kappa_at(kids[1]))
            if t > best_t:  # strict: first (lowest) axis wins ties
                best_d, best_t, best_kids = d, t, kids
        log_prune = float(lattice.log_prune[shape][idx])
        log_not_prune = float(lattice.log_not_prune[shape][idx])
        if log_prune > log_not_prune + best_t:
            return TreeNode(block=block, pruned=True)
        return TreeNode(
            block=block,
            split_axis=best_d,
            left=build(best_kids[0]),
            right=build(best_kids[1]),
        )

    return MapTree(root=build(root_block(stats.dims)), dims_padded=stats.dims)


def map_tree_log_posterior(tree: MapTree, lattice: PosteriorLattice) -> float:
    """Posterior log-probability of a tree under the fitted posterior maps.

    Product over nodes of the stop probability at pruned leaves and
    (1 - stop) * split probability at internal nodes; atomic leaves are
    free.  For the extracted MAP tree this equals log kappa of the root.
    """
    stats = lattice.stats
    total = 0.0
    for node in tree.iter_nodes():
        block = node.block
        if block.is_atomic:
            continue
        shape = stats.shape_of(block)
        idx = stats.index_of(block)
        if node.pruned:
            total += float(lattice.log_prune[shape][idx])
        else:
            total += float(lattice.log_not_prune[shape][idx])
            total += float(lattice.log_split[(shape, node.split_axis)][idx])
    return total


def _block_flat_indices(block: Block, dims: tuple[int, ...]) -> np.ndarray:
    """Row-major flat indices of the block's pixels, in canonical order.

    Canonical order inside a leaf is row-major over the block, which is
    what repeatedly halving along the lowest divisible axis produces; the
    decoder regenerates the same order without any transmitted choice.
    """
    ranges = [np.arange(o, o + e) for o, e in zip(block.offset, block.extent)]
    mesh = np.meshgrid(*ranges, indexing="ij")
    return np.ravel_multi_index([m.ravel() for m in mesh], dims)


def permutation_from_tree(tree: MapTree) -> Permutation:
    """Depth-first pixel order: left child first, canonical order in leaves."""
    dims = tree.dims_padded
    n = int(np.prod(dims))
    chunks = [_block_flat_indices(leaf.block, dims) for leaf in tree.leaves()]
    order = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    order = order.astype(np.int64, copy=False)
    inverse = np.empty(n, dtype=np.int64)
    inverse[order] = np.arange(n, dtype=np.int64)
    return Permutation(order=order, inverse=inverse)
