"""Pseudo-likelihood community detection for large sparse networks."""

__version__ = "0.1.0"

from .graph import (SparseGraph, block_edge_counts, block_sums, confusion, degrees,
                    from_edge_list, mismatch_ratio, nmi, two_path_counts)
from .generators import (DirectedPairConfig, SbmConfig, build_edge_prob, couple_to_undirected,
                         sample_dcsbm, sample_directed)
from .init import SpectralConfig, degree_cluster, kmeans, perturbed_matvec, spectral_cluster, spectral_embed
from .em import BlockParams, FitConfig, FitResult, fit, init_params
from .theory import TheoryConfig, one_step_cpl, sample_gamma_labeling, tau_squared, theorem_sweep
