"""Reproducible synthetic data: ground-truth block-term tensors and
SNR-calibrated additive Gaussian noise.

All randomness comes from the counter-based Philox4x64-10 bit generator
(:class:`numpy.random.Philox`) keyed by the caller's seed, so identical
seeds give bit-identical draws across runs and platforms.  Draw order is
part of the interface: :func:`random_btd` fills A_1..A_R, then B_1..B_R,
then C, each row-major via ``standard_normal``; :func:`add_noise` draws
one standard-normal tensor in element order.
"""

from __future__ import annotations

import numpy as np

from .model import BtdFactors, reconstruct
from .tensor3 import frobenius_norm

__all__ = ["random_btd", "random_ranks", "add_noise"]


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def random_btd(dims, ranks, seed: int) -> tuple:
    """Ground-truth factors with i.i.d. standard-normal entries and the
    clean tensor they reconstruct.  Returns ``(factors, tensor)``."""
    i, j, k = (int(d) for d in dims)
    ranks = [int(l) for l in ranks]
    if min(i, j, k) < 1 or min(ranks) < 1:
        raise ValueError("dims and ranks must be positive")
    rng = _generator(seed)
    a = [rng.standard_normal((i, l)) for l in ranks]
    b = [rng.standard_normal((j, l)) for l in ranks]
    factors = BtdFactors(a, b, rng.standard_normal((k, len(ranks))))
    return factors, reconstruct(factors)


def random_ranks(r: int, lo: int, hi: int, seed: int) -> list:
    """r block ranks drawn uniformly from the integers lo..hi inclusive."""
    if r < 1 or lo < 1 or hi < lo:
        raise ValueError("need r >= 1 and 1 <= lo <= hi")
    rng = _generator(seed)
    return [int(v) for v in rng.integers(lo, hi + 1, size=r)]


def add_noise(x: np.ndarray, snr_db: float, seed: int) -> tuple:
    """Additive white Gaussian noise at an exactly realized SNR.

    Draws N with i.i.d. standard-normal entries and scales it by
    sigma = ||X||_F / (||N||_F * 10^(snr_db/20)), so that
    10*log10(||X||_F^2 / (sigma^2 ||N||_F^2)) equals ``snr_db`` exactly
    for the realized draw.  Returns ``(X + sigma*N, sigma)``.
    """
    x_norm = frobenius_norm(x)
    if x_norm == 0.0:
        raise ValueError("cannot calibrate SNR against a zero tensor")
    rng = _generator(seed)
    noise = rng.standard_normal(x.shape)
    sigma = x_norm / (frobenius_norm(noise) * 10.0 ** (snr_db / 20.0))
    return x + sigma * noise, float(sigma)
