"""Unregularized alternating least squares baseline with fixed, user-supplied
block count and ranks.

Each sweep solves the three plain least-squares problems on the mode
unfoldings by minimum-norm solves (the Gram matrices are rank deficient
by construction whenever the ranks are overestimated).  After every sweep
the factors are rebalanced block by block (product-preserving rescaling),
which combats the scale drift the unregularized model is prone to.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .model import BtdFactors, estimate_ranks, reconstruct
from .solver import SolverTrace, build_s, _random_factors, _split_blocks
from .tensor3 import frobenius_norm, khatri_rao_partitioned, unfold

__all__ = ["AlsConfig", "run_als"]


@dataclass
class AlsConfig:
    max_iters: int = 200
    rel_tol: float = 1e-5
    seed: int = 0
    init: BtdFactors | None = None
    rcond: float = 1e-10


def _min_norm_solve(y_t: np.ndarray, m: np.ndarray, rcond: float) -> np.ndarray:
    # pinv(M^T M) M^T equals the pseudo-inverse of M, so this is the
    # minimum-norm least-squares solution even for rank-deficient M.
    gram = m.T @ m
    return (np.linalg.pinv(gram, rcond=rcond, hermitian=True) @ (m.T @ y_t)).T


def _rebalance(factors: BtdFactors) -> BtdFactors:
    a_out, b_out, c = [], [], factors.c.copy()
    for r, (a, b) in enumerate(zip(factors.a_blocks, factors.b_blocks)):
        a = a.copy()
        b = b.copy()
        na = np.sqrt((a * a).sum(axis=0))
        nb = np.sqrt((b * b).sum(axis=0))
        ok = (na > 0) & (nb > 0)
        alpha = np.ones_like(na)
        alpha[ok] = np.sqrt(nb[ok] / na[ok])
        a *= alpha
        b /= alpha
        g = frobenius_norm(a @ b.T)
        cn = float(np.linalg.norm(c[:, r]))
        if g > 0 and cn > 0:
            s = np.sqrt(cn / g)
            a *= np.sqrt(s)
            b *= np.sqrt(s)
            c[:, r] /= s
        a_out.append(a)
        b_out.append(b)
    return BtdFactors(a_out, b_out, c)


def run_als(y: np.ndarray, r: int, ranks, cfg: AlsConfig | None = None):
    """Alternating minimum-norm least squares at fixed (R, L_r).

    Returns ``(factors, trace)``; the trace's objective equals its data
    fit (there is no regularizer).  Stopping matches the reweighted
    solver: relative reconstruction-error difference below ``rel_tol``
    or ``max_iters`` sweeps.
    """
    cfg = cfg or AlsConfig()
    if r < 1 or len(ranks) != r or any(l < 1 for l in ranks):
        raise ValueError("need r >= 1 and a positive rank per block")
    if cfg.init is not None:
        factors = cfg.init.copy()
    else:
        base = _random_factors(y.shape, r, max(ranks), cfg.seed)
        factors = BtdFactors([a[:, :l] for a, l in zip(base.a_blocks, ranks)],
                             [b[:, :l] for b, l in zip(base.b_blocks, ranks)],
                             base.c)
    y1_t = np.ascontiguousarray(unfold(y, 1).T)
    y2_t = np.ascontiguousarray(unfold(y, 2).T)
    y3_t = np.ascontiguousarray(unfold(y, 3).T)

    trace = SolverTrace(lam=0.0)
    prev_err = None
    for _ in range(cfg.max_iters):
        tic = time.perf_counter()
        a_new = _split_blocks(
            _min_norm_solve(y1_t, khatri_rao_partitioned(factors.b_blocks, factors.c_columns()), cfg.rcond),
            ranks)
        factors = BtdFactors(a_new, factors.b_blocks, factors.c)
        b_new = _split_blocks(
            _min_norm_solve(y2_t, khatri_rao_partitioned(factors.c_columns(), factors.a_blocks), cfg.rcond),
            ranks)
        factors = BtdFactors(factors.a_blocks, b_new, factors.c)
        c_new = _min_norm_solve(y3_t, build_s(factors.a_blocks, factors.b_blocks), cfg.rcond)
        factors = _rebalance(BtdFactors(factors.a_blocks, factors.b_blocks, c_new))

        err = frobenius_norm(y - reconstruct(factors))
        fit = 0.5 * err * err
        est = estimate_ranks(factors)
        rel = abs(err - prev_err) / prev_err if prev_err not in (None, 0.0) else np.inf
        trace.objective.append(fit)
        trace.data_fit.append(fit)
        trace.reg.append(0.0)
        trace.rel_diff.append(rel)
        trace.active_r.append(est.r_est)
        trace.active_l.append(est.l_est)
        trace.wall_ms.append(1e3 * (time.perf_counter() - tic))
        if rel < cfg.rel_tol:
            trace.converged = True
            break
        prev_err = err
    return factors, trace
