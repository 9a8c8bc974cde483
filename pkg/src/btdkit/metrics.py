"""Evaluation metrics: block-matched NMSE with optimal assignment,
relative reconstruction error, and windowed structural similarity.

Block matching always happens on the per-block *tensors*
``(A_r B_r^T) outer c_r``, so the model's permutation and per-block
counter-scaling ambiguities cannot affect any score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .model import BtdFactors, reconstruct
from .tensor3 import frobenius_norm

__all__ = [
    "AssignmentResult",
    "linear_assignment",
    "block_nmse",
    "reconstruction_error",
    "ssim",
    "band_ssim",
]


@dataclass
class AssignmentResult:
    """Optimal injective row -> column assignment of a cost matrix."""

    permutation: dict
    total_cost: float
    per_pair_costs: np.ndarray

    @property
    def pairs(self) -> list:
        return sorted(self.permutation.items())


def linear_assignment(cost: np.ndarray) -> AssignmentResult:
    """Globally optimal assignment of min(rows, cols) pairs minimizing
    the summed cost; rectangular matrices are allowed."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or not np.isfinite(cost).all():
        raise ValueError("cost must be a finite matrix")
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    return AssignmentResult(permutation=dict(zip(rows.tolist(), cols.tolist())),
                            total_cost=float(cost[rows, cols].sum()),
                            per_pair_costs=cost)


def block_nmse(truth: BtdFactors, est: BtdFactors) -> tuple:
    """Block-matched normalized squared error, averaged over true blocks.

    cost[r, s] = ||T_r - E_s||_F^2 / ||T_r||_F^2 over block tensors; the
    assignment resolving the permutation ambiguity is chosen optimally.
    With more estimated than true blocks only the matched ones count;
    a true block left unmatched (fewer estimated blocks) costs 1, the
    error of an all-zero estimate.  Returns ``(nmse, assignment)``.
    """
    true_blocks = [truth.block_tensor(r) for r in range(truth.n_blocks)]
    est_blocks = [est.block_tensor(s) for s in range(est.n_blocks)]
    norms = [float((t * t).sum()) for t in true_blocks]
    if min(norms) <= 0.0:
        raise ValueError("every true block must have nonzero norm")
    cost = np.empty((len(true_blocks), len(est_blocks)))
    for r, (t, nt) in enumerate(zip(true_blocks, norms)):
        for s, e in enumerate(est_blocks):
            diff = t - e
            cost[r, s] = float((diff * diff).sum()) / nt
    assignment = linear_assignment(cost)
    unmatched = len(true_blocks) - len(assignment.permutation)
    nmse = (assignment.total_cost + float(unmatched)) / len(true_blocks)
    return nmse, assignment


def reconstruction_error(y: np.ndarray, factors: BtdFactors) -> float:
    """Relative reconstruction error ||Y - reconstruct(F)||_F / ||Y||_F."""
    return frobenius_norm(y - reconstruct(factors)) / frobenius_norm(y)


def _window_means(img: np.ndarray, window: int) -> np.ndarray:
    # Mean over every full window position (valid region), via a separable
    # cumulative-sum box filter.
    cs = np.cumsum(np.cumsum(np.pad(img, ((1, 0), (1, 0))), axis=0), axis=1)
    w = window
    total = cs[w:, w:] - cs[:-w, w:] - cs[w:, :-w] + cs[:-w, :-w]
    return total / (w * w)


def ssim(img_a: np.ndarray, img_b: np.ndarray, window: int = 7,
         dynamic_range: float | None = None) -> float:
    """Mean local structural similarity over all full window positions.

    Uniform square window (odd, >= 3, capped to fit the image), population
    window statistics, and the standard stabilizers C1 = (0.01*range)^2,
    C2 = (0.03*range)^2.  When ``dynamic_range`` is omitted it is taken
    as the joint value range of the two images.
    """
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError("images must be two matrices of equal shape")
    window = min(window, min(a.shape))
    if window % 2 == 0:
        window -= 1
    if window < 3:
        raise ValueError("window must be odd and >= 3 after capping to the image")
    if dynamic_range is None:
        dynamic_range = float(max(a.max(), b.max()) - min(a.min(), b.min()))
        if dynamic_range == 0.0:
            dynamic_range = 1.0
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2

    mu_a = _window_means(a, window)
    mu_b = _window_means(b, window)
    var_a = _window_means(a * a, window) - mu_a * mu_a
    var_b = _window_means(b * b, window) - mu_b * mu_b
    cov = _window_means(a * b, window) - mu_a * mu_b
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)
             / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)))
    return float(score.mean())


def band_ssim(cube_a: np.ndarray, cube_b: np.ndarray, window: int = 7,
              dynamic_range: float | None = None) -> list:
    """Per-band SSIM of two (I, J, K) cubes: [(band, ssim), ...] for k = 0..K-1."""
    if cube_a.shape != cube_b.shape or cube_a.ndim != 3:
        raise ValueError("cubes must be two tensors of equal shape")
    return [(k, ssim(cube_a[:, :, k], cube_b[:, :, k], window, dynamic_range))
            for k in range(cube_a.shape[2])]
