"""Per-factor partial objectives, analytic gradients, tangent quadratic
upper bounds, and the Hessian-domination check used by the optimization
property tests.

For the A step (B, C held at their sweep-entry values) the partial
objective is

    f_A(A) = 0.5*||Y1^T - P A^T||_F^2
             + lam * sum_r sqrt(s_r(A)^2 + ||c_r||^2 + eta^2),

with ``s_r(A) = sum_l sqrt(||a_rl||^2 + ||b_rl||^2 + eta^2)`` and
``P`` the partition-wise Khatri-Rao product of the B blocks with the C
columns.  The quadratic model

    g_A(A) = f_A(A_k) + <grad f_A(A_k), A - A_k>
             + 0.5 * tr((A - A_k) (P^T P + lam*diag(d)) (A - A_k)^T)

is tangent to f_A at A_k; with the majorizing weight composition its
curvature dominates the true Hessian there (the gap is PSD and scales
linearly in lam), and its exact minimizer is the solver's closed-form
ridge update with the same diagonal.  B is symmetric with Q in place of
P; for C the quadratic uses S^T S + lam*diag(d1) and the bound is exact
at both levels.
"""

from __future__ import annotations

import numpy as np

from .model import BtdFactors, hierarchical_penalty
from .solver import (block_column_sums, block_weights, column_weights,
                     compose_weights, compose_weights_majorizing)
from .tensor3 import khatri_rao_partitioned

__all__ = [
    "factor_stack",
    "penalty_value",
    "penalty_grad_columns",
    "penalty_grad_c",
    "partial_objective",
    "partial_gradient",
    "surrogate_value",
    "surrogate_minimizer_matches_update",
    "ridge_gradient",
    "hessian_gap_min_eig",
]


def factor_stack(blocks) -> np.ndarray:
    return np.hstack(blocks)


def _with_a(factors: BtdFactors, a_full: np.ndarray) -> BtdFactors:
    splits = np.cumsum(factors.ranks)[:-1]
    return BtdFactors(np.split(a_full, splits, axis=1), factors.b_blocks, factors.c)


def _with_b(factors: BtdFactors, b_full: np.ndarray) -> BtdFactors:
    splits = np.cumsum(factors.ranks)[:-1]
    return BtdFactors(factors.a_blocks, np.split(b_full, splits, axis=1), factors.c)


def _with_c(factors: BtdFactors, c: np.ndarray) -> BtdFactors:
    return BtdFactors(factors.a_blocks, factors.b_blocks, c)


def _substitute(factors: BtdFactors, which: str, value: np.ndarray) -> BtdFactors:
    return {"a": _with_a, "b": _with_b, "c": _with_c}[which](factors, value)


def penalty_value(factors: BtdFactors, eta: float) -> float:
    return hierarchical_penalty(factors, eta)


def penalty_grad_columns(factors: BtdFactors, eta: float, which: str) -> np.ndarray:
    """Gradient of the hierarchical penalty w.r.t. the stacked A (or B) factor.

    Column (r, l) of the gradient is d1_r * s_r * x_rl / w_rl, where w_rl
    is the column's smoothed joint norm and s_r the block's sum of them.
    """
    d1 = block_weights(factors, eta)
    d2 = column_weights(factors, eta)
    sums = block_column_sums(factors, eta)
    scale = np.repeat(d1 * sums, factors.ranks) * d2
    stacked = factor_stack(factors.a_blocks if which == "a" else factors.b_blocks)
    return stacked * scale


def penalty_grad_c(factors: BtdFactors, eta: float) -> np.ndarray:
    """Gradient of the hierarchical penalty w.r.t. C: column r is d1_r * c_r."""
    return factors.c * block_weights(factors, eta)


def design_matrix(factors: BtdFactors, which: str) -> np.ndarray:
    """The least-squares basis of the given factor's linear subproblem."""
    if which == "a":
        return khatri_rao_partitioned(factors.b_blocks, factors.c_columns())
    if which == "b":
        return khatri_rao_partitioned(factors.c_columns(), factors.a_blocks)
    from .solver import build_s
    return build_s(factors.a_blocks, factors.b_blocks)


def partial_objective(value: np.ndarray, factors_k: BtdFactors, y_unf_t: np.ndarray,
                      lam: float, eta: float, which: str) -> float:
    """f_X(value) with the other two factors fixed at ``factors_k``."""
    current = _substitute(factors_k, which, value)
    m = design_matrix(factors_k, which)
    resid = y_unf_t - m @ value.T
    return 0.5 * float((resid * resid).sum()) + lam * penalty_value(current, eta)


def partial_gradient(value: np.ndarray, factors_k: BtdFactors, y_unf_t: np.ndarray,
                     lam: float, eta: float, which: str) -> np.ndarray:
    """Analytic gradient of :func:`partial_objective` w.r.t. ``value``."""
    current = _substitute(factors_k, which, value)
    m = design_matrix(factors_k, which)
    grad_data = value @ (m.T @ m) - y_unf_t.T @ m
    if which == "c":
        return grad_data + lam * penalty_grad_c(current, eta)
    return grad_data + lam * penalty_grad_columns(current, eta, which)


def _quad_diag(factors_k: BtdFactors, eta: float, weighting: str, which: str) -> np.ndarray:
    d1 = block_weights(factors_k, eta)
    if which == "c":
        return d1
    d2 = column_weights(factors_k, eta)
    if weighting == "tabulated":
        return compose_weights(d1, d2, factors_k.ranks)
    return compose_weights_majorizing(d1, d2, factors_k.ranks,
                                      block_column_sums(factors_k, eta))


def surrogate_value(value: np.ndarray, factors_k: BtdFactors, y_unf_t: np.ndarray,
                    lam: float, eta: float, which: str,
                    weighting: str = "majorizing") -> float:
    """Tangent quadratic model g_X(value) expanded at ``factors_k``."""
    anchor = {"a": factor_stack(factors_k.a_blocks),
              "b": factor_stack(factors_k.b_blocks),
              "c": factors_k.c}[which]
    f_k = partial_objective(anchor, factors_k, y_unf_t, lam, eta, which)
    grad_k = partial_gradient(anchor, factors_k, y_unf_t, lam, eta, which)
    m = design_matrix(factors_k, which)
    quad = m.T @ m + lam * np.diag(_quad_diag(factors_k, eta, weighting, which))
    delta = value - anchor
    return f_k + float((delta * grad_k).sum()) + 0.5 * float(((delta @ quad) * delta).sum())


def surrogate_minimizer_matches_update(factors_k: BtdFactors, y_unf_t: np.ndarray,
                                       lam: float, eta: float, which: str,
                                       weighting: str = "majorizing") -> tuple:
    """(argmin of the quadratic model, closed-form ridge update) pair."""
    from .solver import update_a
    anchor = {"a": factor_stack(factors_k.a_blocks),
              "b": factor_stack(factors_k.b_blocks),
              "c": factors_k.c}[which]
    m = design_matrix(factors_k, which)
    d = _quad_diag(factors_k, eta, weighting, which)
    quad = m.T @ m + lam * np.diag(d)
    grad_k = partial_gradient(anchor, factors_k, y_unf_t, lam, eta, which)
    argmin = anchor - np.linalg.solve(quad, grad_k.T).T
    return argmin, update_a(y_unf_t, m, d, lam)


def ridge_gradient(solution: np.ndarray, y_unf_t: np.ndarray, m: np.ndarray,
                   d: np.ndarray, lam: float) -> np.ndarray:
    """Gradient of the reweighted quadratic objective at ``solution``.

    The objective is 0.5*||Y^T - M X^T||^2 + 0.5*lam*tr(X diag(d) X^T);
    the solver's closed-form update must zero this.
    """
    return solution @ (m.T @ m) - y_unf_t.T @ m + lam * solution * d


def hessian_gap_min_eig(factors_k: BtdFactors, y_unf_t: np.ndarray, lam: float,
                        eta: float, weighting: str = "majorizing",
                        fd_step: float = 1e-6, max_size: int = 64) -> float:
    """Smallest eigenvalue of (quadratic-model curvature - true Hessian)
    of the A-step partial objective at the expansion point.

    The true Hessian is formed by central finite differences of the
    analytic gradient; restricted to small instances (I * sum L_r <=
    ``max_size``).
    """
    i = factors_k.dims[0]
    total_cols = sum(factors_k.ranks)
    n = i * total_cols
    if n > max_size:
        raise ValueError(f"instance too large for a dense Hessian ({n} > {max_size})")

    a0 = factor_stack(factors_k.a_blocks)
    x0 = a0.ravel()

    def grad_flat(x):
        return partial_gradient(x.reshape(i, total_cols), factors_k, y_unf_t,
                                lam, eta, "a").ravel()

    hess = np.empty((n, n))
    for col in range(n):
        h = fd_step * (1.0 + abs(x0[col]))
        xp = x0.copy()
        xp[col] += h
        xm = x0.copy()
        xm[col] -= h
        hess[:, col] = (grad_flat(xp) - grad_flat(xm)) / (2.0 * h)
    hess = 0.5 * (hess + hess.T)

    m = design_matrix(factors_k, "a")
    quad = m.T @ m + lam * np.diag(_quad_diag(factors_k, eta, weighting, "a"))
    model_hess = np.kron(np.eye(i), quad)
    return float(np.linalg.eigvalsh(model_hess - hess).min())
