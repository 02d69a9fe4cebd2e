"""Fractional Gaussian noise by circulant embedding."""

import functools
import logging

import numpy as np
import scipy.fft
from scipy.special import binom

from .. import rng as rngmod

log = logging.getLogger(__name__)

EIGEN_CLIP = -1e-9


def fgn_autocovariance(k, hurst):
    """r(k) = 1/2 (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}).

    Lags >= 8 use the binomial series k^{2H} sum_j C(2H, 2j) k^{-2j}, which
    avoids the cancellation of the direct formula at large lags.
    """
    k = np.abs(np.asarray(k, dtype=float))
    p = 2.0 * hurst
    out = np.empty_like(k)
    small = k < 8
    ks = k[small]
    out[small] = 0.5 * (np.abs(ks + 1) ** p - 2 * ks**p + np.abs(ks - 1) ** p)
    kl = k[~small]
    if kl.size:
        inv2 = kl**-2.0
        series = np.zeros_like(kl)
        for j in range(10, 0, -1):
            series = (series + binom(p, 2 * j)) * inv2
        out[~small] = kl**p * series
    return out


def embedding_size(n):
    return scipy.fft.next_fast_len(max(2 * (n - 1), 2), real=True)


@functools.lru_cache(maxsize=6)
def _sqrt_eigenvalues(hurst, size):
    half = size // 2
    r = fgn_autocovariance(np.arange(half + 1), hurst)
    row = np.concatenate([r, r[1:size - half][::-1]])
    lam = scipy.fft.rfft(row).real
    lo = lam.min()
    if lo < EIGEN_CLIP:
        log.warning("circulant embedding: eigenvalue %.3e below %.0e (H=%g, size=%d); clipping",
                    lo, EIGEN_CLIP, hurst, size)
    out = np.sqrt(np.clip(lam, 0.0, None))
    out.setflags(write=False)
    return out


def fgn_from_noise(hurst, n, noise):
    """Map white noise of shape (..., embedding_size(n)) to fGn of length n."""
    size = noise.shape[-1]
    if size < 2 * (n - 1):
        raise ValueError("noise too short for the circulant embedding")
    lam = _sqrt_eigenvalues(float(hurst), size)
    return scipy.fft.irfft(lam * scipy.fft.rfft(noise, axis=-1), n=size, axis=-1)[..., :n]


def fgn_from_generator(hurst, n, gen):
    return fgn_from_noise(hurst, n, gen.standard_normal(embedding_size(n)))


def generate_fgn(hurst, n, seed, rep_id=0):
    """Unit-variance fGn X_0..X_{n-1} with Hurst index `hurst` in [1/2, 1)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0.5 <= hurst < 1.0:
        raise ValueError(f"fGn Hurst index {hurst} outside [1/2, 1)")
    return fgn_from_generator(hurst, n, rngmod.stream(seed, rep_id, rngmod.PATH_NOISE))
