"""Gauss rules mapped onto the unit interval."""

import functools

import numpy as np
from scipy.special import roots_jacobi


@functools.lru_cache(maxsize=64)
def gauss01(n):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@functools.lru_cache(maxsize=256)
def jacobi01(n, a, b):
    """Gauss rule on [0, 1] for the weight (1 - t)**a * t**b."""
    x, w = roots_jacobi(n, a, b)
    return 0.5 * (x + 1.0), w / 2.0 ** (a + b + 1.0)


def composite_nodes(edges, n):
    """Composite Gauss-Legendre rule over the cells delimited by `edges`.

    Returns (nodes, weights), each of shape (n_cells, n).
    """
    edges = np.asarray(edges, dtype=float)
    g, gw = gauss01(n)
    width = np.diff(edges)
    nodes = edges[:-1, None] + width[:, None] * g
    weights = width[:, None] * gw
    return nodes, weights


def merge_edges(required, optional, spacing):
    """Sorted union of two point sets on a line.

    Optional points closer than 0.3 * spacing to a required point are dropped
    so that no sliver cells appear next to the required points.
    """
    required = np.unique(np.asarray(required, dtype=float))
    keep = np.asarray(required[np.concatenate([[True], np.diff(required) > 1e-14])])
    optional = np.asarray(optional, dtype=float)
    if keep.size and optional.size:
        pos = np.searchsorted(keep, optional)
        lo = keep[np.clip(pos - 1, 0, keep.size - 1)]
        hi = keep[np.clip(pos, 0, keep.size - 1)]
        dist = np.minimum(np.abs(optional - lo), np.abs(hi - optional))
        optional = optional[dist > 0.3 * spacing]
    return np.sort(np.concatenate([keep, optional]))
