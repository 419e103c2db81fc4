"""Exact t-SNE plus diagnostics that measure how far an embedding sits from
the known degenerate configurations (collapsed balls, crowded grids, merged
blocks)."""

from .affinity import AffinityConfig, affinities, bandwidth_search, uniformity_statistic
from .datasets import PointCloud, pca
from .divergences import PairDistribution, chi_squared, kl_divergence, perplexity, shannon_entropy, tv_distance
from .optimizer import DivergedError, OptimizerConfig, run

__version__ = "0.1.0"

__all__ = [
    "AffinityConfig", "DivergedError", "OptimizerConfig", "PairDistribution", "PointCloud",
    "affinities", "bandwidth_search", "chi_squared", "kl_divergence", "pca", "perplexity",
    "run", "shannon_entropy", "tv_distance", "uniformity_statistic",
]
