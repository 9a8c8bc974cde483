"""Rank-(L,L,1) block-term factor container, reconstruction, rank counting
and pruning.

A model with R block terms holds matrices ``A_r (I x L_r)``, ``B_r
(J x L_r)`` and a matrix ``C (K x R)``; block r contributes the tensor
``(A_r @ B_r.T) outer C[:, r]``.  The decomposition is invariant to block
permutations and to per-block counter-scalings, so every energy-based rule
in this module is relative, never absolute.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .tensor3 import fold, khatri_rao_partitioned, read_matrix, write_matrix

__all__ = [
    "BtdFactors",
    "RankEstimate",
    "reconstruct",
    "block_norms",
    "hierarchical_penalty",
    "estimate_ranks",
    "prune_blocks",
    "prune_columns",
    "save_factors",
    "load_factors",
]

# Relative activity thresholds; fractions of the maximum energy.
DEFAULT_BLOCK_TOL = 1e-2
DEFAULT_COL_TOL = 1e-2


@dataclass
class BtdFactors:
    """Block-partitioned factors of a rank-(L,L,1) block-term model."""

    a_blocks: list
    b_blocks: list
    c: np.ndarray

    def __post_init__(self):
        self.a_blocks = [np.ascontiguousarray(a, dtype=np.float64) for a in self.a_blocks]
        self.b_blocks = [np.ascontiguousarray(b, dtype=np.float64) for b in self.b_blocks]
        self.c = np.ascontiguousarray(self.c, dtype=np.float64)
        r = len(self.a_blocks)
        if r < 1:
            raise ValueError("need at least one block")
        if len(self.b_blocks) != r or self.c.ndim != 2 or self.c.shape[1] != r:
            raise ValueError("a_blocks, b_blocks and C columns must agree on the block count")
        i_rows = {a.shape[0] for a in self.a_blocks}
        j_rows = {b.shape[0] for b in self.b_blocks}
        if len(i_rows) != 1 or len(j_rows) != 1:
            raise ValueError("all A_r (resp. B_r) blocks must share their row count")
        for r_, (a, b) in enumerate(zip(self.a_blocks, self.b_blocks)):
            if a.shape[1] != b.shape[1] or a.shape[1] < 1:
                raise ValueError(f"block {r_}: A_r and B_r must have the same positive column count")

    @property
    def n_blocks(self) -> int:
        return len(self.a_blocks)

    @property
    def ranks(self) -> list:
        return [a.shape[1] for a in self.a_blocks]

    @property
    def dims(self) -> tuple:
        return (self.a_blocks[0].shape[0], self.b_blocks[0].shape[0], self.c.shape[0])

    def c_columns(self) -> list:
        """C split into K x 1 blocks, as Khatri-Rao partitioned products need."""
        return [self.c[:, r:r + 1] for r in range(self.n_blocks)]

    def copy(self) -> "BtdFactors":
        return BtdFactors([a.copy() for a in self.a_blocks],
                          [b.copy() for b in self.b_blocks], self.c.copy())

    def block_tensor(self, r: int) -> np.ndarray:
        """The tensor contributed by block r alone."""
        return np.multiply.outer(self.a_blocks[r] @ self.b_blocks[r].T, self.c[:, r])


@dataclass
class RankEstimate:
    """Estimated block count and per-block ranks, with the energy evidence.

    ``c_energies`` and ``column_energies`` cover *all* blocks of the input
    factors (pre-threshold); ``l_est`` lists the active blocks only, in
    block order.
    """

    r_est: int
    l_est: list
    column_energies: list = field(repr=False)
    c_energies: np.ndarray = field(repr=False)
    active_blocks: list = field(repr=False, default_factory=list)

    def sorted_ranks(self) -> list:
        return sorted(self.l_est, reverse=True)


def reconstruct(factors: BtdFactors) -> np.ndarray:
    """Dense tensor of the model: X[i,j,k] = sum_r (A_r B_r^T)[i,j] * C[k,r]."""
    i, j, k = factors.dims
    full_a = np.hstack(factors.a_blocks)
    x1_t = khatri_rao_partitioned(factors.b_blocks, factors.c_columns()) @ full_a.T
    return fold(x1_t.T, 1, (i, j, k))


def block_norms(factors: BtdFactors) -> np.ndarray:
    """2 x R table coupling each block's factor energy with its C column.

    Row 0, entry r: sum over columns l of sqrt(||a_rl||^2 + ||b_rl||^2)
    (the l2-column-norm sum of the stacked block [A_r; B_r]); row 1,
    entry r: ||C[:, r]||_2.
    """
    r = factors.n_blocks
    out = np.zeros((2, r))
    for idx, (a, b) in enumerate(zip(factors.a_blocks, factors.b_blocks)):
        out[0, idx] = np.sqrt((a * a).sum(axis=0) + (b * b).sum(axis=0)).sum()
    out[1] = np.sqrt((factors.c * factors.c).sum(axis=0))
    return out


def hierarchical_penalty(factors: BtdFactors, eta: float) -> float:
    """Smoothed two-level group norm of the factors (without any multiplier).

    Per block r: sqrt((sum_l sqrt(||a_rl||^2 + ||b_rl||^2 + eta^2))^2
    + ||c_r||^2 + eta^2), summed over blocks.  At eta = 0 this equals the
    l1,2 norm of :func:`block_norms`.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    total = 0.0
    c_sq = (factors.c * factors.c).sum(axis=0)
    for r, (a, b) in enumerate(zip(factors.a_blocks, factors.b_blocks)):
        col_sum = np.sqrt((a * a).sum(axis=0) + (b * b).sum(axis=0) + eta * eta).sum()
        total += np.sqrt(col_sum * col_sum + c_sq[r] + eta * eta)
    return float(total)


def _joint_column_energies(factors: BtdFactors) -> list:
    return [np.sqrt((a * a).sum(axis=0) + (b * b).sum(axis=0))
            for a, b in zip(factors.a_blocks, factors.b_blocks)]


def _active_blocks(c_energies: np.ndarray, block_tol: float) -> np.ndarray:
    top = c_energies.max()
    if top <= 0.0:
        # Degenerate all-zero C: a decomposition still reports one block.
        mask = np.zeros(c_energies.size, dtype=bool)
        mask[int(np.argmax(c_energies))] = True
        return mask
    return c_energies >= block_tol * top


def estimate_ranks(factors: BtdFactors, block_tol: float = DEFAULT_BLOCK_TOL,
                   col_tol: float = DEFAULT_COL_TOL) -> RankEstimate:
    """Count the blocks and per-block columns of non-negligible energy.

    Block r is active iff ||c_r|| >= block_tol * max_s ||c_s||; within an
    active block, column l is active iff its joint energy
    sqrt(||a_rl||^2 + ||b_rl||^2) reaches col_tol times the maximum joint
    energy over all active blocks.  Thresholds are relative, making the
    rule invariant to the model's scaling ambiguity.
    """
    if not (0.0 < block_tol < 1.0 and 0.0 < col_tol < 1.0):
        raise ValueError("tolerances must lie in (0, 1)")
    c_energies = np.sqrt((factors.c * factors.c).sum(axis=0))
    col_energies = _joint_column_energies(factors)
    active = _active_blocks(c_energies, block_tol)
    ref = max(col_energies[r].max() for r in range(factors.n_blocks) if active[r])
    l_est = []
    active_idx = []
    for r in range(factors.n_blocks):
        if not active[r]:
            continue
        count = int((col_energies[r] >= col_tol * ref).sum()) if ref > 0 else 0
        l_est.append(max(count, 1))
        active_idx.append(r)
    return RankEstimate(r_est=len(active_idx), l_est=l_est,
                        column_energies=col_energies, c_energies=c_energies,
                        active_blocks=active_idx)


def prune_blocks(factors: BtdFactors, block_tol: float = DEFAULT_BLOCK_TOL) -> BtdFactors:
    """Drop blocks whose C column energy is below block_tol times the max.

    At least one block is always retained; surviving entries are unaltered.
    """
    c_energies = np.sqrt((factors.c * factors.c).sum(axis=0))
    keep = _active_blocks(c_energies, block_tol)
    if keep.all():
        return factors
    idx = np.flatnonzero(keep)
    return BtdFactors([factors.a_blocks[r] for r in idx],
                      [factors.b_blocks[r] for r in idx],
                      factors.c[:, idx])


def prune_columns(factors: BtdFactors, col_tol: float = DEFAULT_COL_TOL) -> BtdFactors:
    """Jointly drop (a_rl, b_rl) column pairs of negligible joint energy.

    The reference is the maximum joint column energy across all blocks;
    every block keeps at least one column.
    """
    col_energies = _joint_column_energies(factors)
    ref = max(c.max() for c in col_energies)
    if ref <= 0.0:
        return factors
    a_out, b_out = [], []
    for r in range(factors.n_blocks):
        keep = col_energies[r] >= col_tol * ref
        if not keep.any():
            keep[int(np.argmax(col_energies[r]))] = True
        a_out.append(factors.a_blocks[r][:, keep])
        b_out.append(factors.b_blocks[r][:, keep])
    if all(a.shape[1] == old.shape[1] for a, old in zip(a_out, factors.a_blocks)):
        return factors
    return BtdFactors(a_out, b_out, factors.c)


# ---------------------------------------------------------------------------
# On-disk factor directory: a `meta` text file with lines
#   R <n_blocks>
#   dims <I> <J> <K>
#   L <L_1> ... <L_R>
# plus A_<r>.mat, B_<r>.mat (r = 1..R) and C.mat in the M2 matrix format.
# ---------------------------------------------------------------------------

def save_factors(directory, factors: BtdFactors) -> None:
    os.makedirs(directory, exist_ok=True)
    i, j, k = factors.dims
    with open(os.path.join(directory, "meta"), "w", encoding="ascii") as fh:
        fh.write(f"R {factors.n_blocks}\n")
        fh.write(f"dims {i} {j} {k}\n")
        fh.write("L " + " ".join(str(l) for l in factors.ranks) + "\n")
    for r in range(factors.n_blocks):
        write_matrix(os.path.join(directory, f"A_{r + 1}.mat"), factors.a_blocks[r])
        write_matrix(os.path.join(directory, f"B_{r + 1}.mat"), factors.b_blocks[r])
    write_matrix(os.path.join(directory, "C.mat"), factors.c)


def load_factors(directory) -> BtdFactors:
    meta = {}
    with open(os.path.join(directory, "meta"), encoding="ascii") as fh:
        for line in fh:
            fields = line.split()
            if fields:
                meta[fields[0]] = fields[1:]
    n_blocks = int(meta["R"][0])
    a_blocks = [read_matrix(os.path.join(directory, f"A_{r + 1}.mat")) for r in range(n_blocks)]
    b_blocks = [read_matrix(os.path.join(directory, f"B_{r + 1}.mat")) for r in range(n_blocks)]
    return BtdFactors(a_blocks, b_blocks, read_matrix(os.path.join(directory, "C.mat")))
