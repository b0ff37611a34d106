"""carp: lossy multi-dimensional image compression built on an
image-adaptive pixel permutation, a 1D Haar transform, and Huffman coding.

The permutation comes from the MAP estimate of a Bayesian model over
recursive dyadic partitions of the pixel space; a single knob (sigma)
controls how aggressively near-constant regions are collapsed, and maps
monotonically to the achieved compression ratio.
"""

__version__ = "0.1.0"

from .codec import (RatioSearchResult, compress, decompress,
                    decompress_with_bits, default_q, target_ratio_search)
from .errors import (CarpError, DimensionError, NumericError, ParseError,
                     ResourceError, StreamError)
from .grid import PixelGrid, crop, load, pad, save
from .lattice import (Block, BlockStats, StatsLattice, build_stats, children,
                      divisible_dims, haar_coefficient)
from .metrics import QualityReport, ms_ssim, psnr, quality_report
from .model import (Hyperparams, HyperGrid, PosteriorLattice, build_posterior,
                    empirical_bayes_fit)
from .stream import CompressedStream, deserialize_tree, serialize_tree
from .transform import (CoefficientPyramid, dequantize, haar_forward,
                        haar_inverse, quantize)
from .tree import (MapTree, Permutation, TreeNode, compute_kappa,
                   extract_map_tree, map_tree_log_posterior,
                   permutation_from_tree)

__all__ = [
    "Block",
    "BlockStats",
    "CarpError",
    "CoefficientPyramid",
    "CompressedStream",
    "DimensionError",
    "HyperGrid",
    "Hyperparams",
    "MapTree",
    "NumericError",
    "ParseError",
    "Permutation",
    "PixelGrid",
    "PosteriorLattice",
    "QualityReport",
    "RatioSearchResult",
    "ResourceError",
    "StatsLattice",
    "StreamError",
    "TreeNode",
    "build_posterior",
    "build_stats",
    "children",
    "compress",
    "compute_kappa",
    "crop",
    "decompress",
    "decompress_with_bits",
    "default_q",
    "dequantize",
    "deserialize_tree",
    "divisible_dims",
    "empirical_bayes_fit",
    "extract_map_tree",
    "haar_coefficient",
    "haar_forward",
    "haar_inverse",
    "load",
    "map_tree_log_posterior",
    "ms_ssim",
    "pad",
    "permutation_from_tree",
    "psnr",
    "quality_report",
    "quantize",
    "save",
    "serialize_tree",
    "target_ratio_search",
]
