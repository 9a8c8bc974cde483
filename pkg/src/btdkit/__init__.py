"""btdkit: dense rank-(L,L,1) block-term tensor decomposition with joint
estimation of the number of block terms and their ranks.

The solver alternates closed-form ridge updates whose diagonal weights
are recomputed from the current factors each sweep; as the weights of
negligible blocks and columns blow up, overestimated ranks collapse to
the true ones, which are then read off the factor energies.
"""

__version__ = "0.1.0"

from .als import AlsConfig, run_als
from .metrics import (AssignmentResult, band_ssim, block_nmse, linear_assignment,
                      reconstruction_error, ssim)
from .model import (BtdFactors, RankEstimate, block_norms, estimate_ranks,
                    hierarchical_penalty, load_factors, prune_blocks, prune_columns,
                    reconstruct, save_factors)
from .solver import (SolverConfig, SolverError, SolverTrace, decompose,
                     decompose_multistart, lambda_heuristic, objective)
from .synth import add_noise, random_btd, random_ranks
from .tensor3 import (ParseError, fold, frobenius_norm, khatri_rao_columnwise,
                      khatri_rao_partitioned, kronecker, read_matrix, read_tensor,
                      unfold, write_matrix, write_tensor)

__all__ = [
    "AlsConfig", "AssignmentResult", "BtdFactors", "ParseError", "RankEstimate",
    "SolverConfig", "SolverError", "SolverTrace",
    "add_noise", "band_ssim", "block_nmse", "block_norms", "decompose",
    "decompose_multistart", "estimate_ranks", "fold", "frobenius_norm",
    "hierarchical_penalty", "khatri_rao_columnwise", "khatri_rao_partitioned",
    "kronecker", "lambda_heuristic", "linear_assignment", "load_factors",
    "objective", "prune_blocks", "prune_columns", "random_btd", "random_ranks",
    "read_matrix", "read_tensor", "reconstruct", "reconstruction_error",
    "run_als", "save_factors", "ssim", "unfold", "write_matrix", "write_tensor",
]
