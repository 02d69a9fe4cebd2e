"""Hermite processes as normalized partial sums of He_q(fGn) (non-central limit)."""

import functools
import logging
import math

import numpy as np
from numpy.polynomial import hermite_e

from .. import rng as rngmod
from .fgn import fgn_autocovariance, fgn_from_generator
from .paths import ProcessPath

log = logging.getLogger(__name__)

RECOMMENDED_INNER = 64
_warned = set()


@functools.lru_cache(maxsize=64)
def partial_sum_variance(order, noise_hurst, m):
    """Var(sum_{i<m} He_q(X_i)) = q! sum_{|k|<m} (m-|k|) r(k)^q for unit fGn X."""
    total = float(m)
    chunk = 1 << 22
    for start in range(1, m, chunk):
        k = np.arange(start, min(m, start + chunk), dtype=float)
        total += 2.0 * float(np.sum((m - k) * fgn_autocovariance(k, noise_hurst) ** order))
    return math.factorial(order) * total


def simulate_hermite_nclt(params, n_grid, inner_factor, seed, step=None, rep_id=0):
    """Z(j*step), j = 0..n_grid, from partial sums of He_q over fGn with Hurst 1+(H-1)/q.

    Each grid step spans `inner_factor` noise samples. The normalization is
    the exact standard deviation of the partial sum over one unit of time,
    so Var(Z_1) = 1 holds by construction (no pilot run needed).
    """
    if inner_factor < 1 or n_grid < 1:
        raise ValueError("n_grid and inner_factor must be >= 1")
    if step is None:
        step = 1.0 / n_grid
    if inner_factor < RECOMMENDED_INNER and inner_factor not in _warned:
        _warned.add(inner_factor)
        log.warning("nclt: inner_factor %d below %d; non-central limit approximation is coarser",
                    inner_factor, RECOMMENDED_INNER)
    h0 = params.fgn_hurst
    assert 0.5 < h0 < 1.0
    m = n_grid * inner_factor
    per_unit = max(1, int(round(inner_factor / step)))
    scale = 1.0 / math.sqrt(partial_sum_variance(params.order, h0, per_unit))

    gen = rngmod.stream(seed, rep_id, rngmod.PATH_NOISE)
    x = fgn_from_generator(h0, max(m, 2), gen)[:m]
    c = np.zeros(params.order + 1)
    c[-1] = 1.0
    y = hermite_e.hermeval(x, c) if params.order > 1 else x
    s = np.cumsum(y)
    values = np.empty(n_grid + 1)
    values[0] = 0.0
    values[1:] = s[inner_factor - 1::inner_factor] * scale
    return ProcessPath(params, float(step), values, "nclt", int(seed))
