"""Hermite processes of order 1 and 2 as multiple Wiener-Ito integrals of simple functions.

The y-axis is cut into cells: uniform cells of width delta on [-near, t_max]
followed, further down, by geometrically growing cells out to -T0. For a
u-node, the kernel factor (u - y)_+^{-alpha} is replaced by its exact cell
average G[u, j]; the u-integral uses 8 Gauss-Legendre nodes per uniform cell
of [0, t_max]. With Brownian cell increments dB_j and Y_u = sum_j G[u,j] dB_j,

    q = 1:  Z_t = c * sum_{u < t} w_u Y_u
    q = 2:  Z_t = c * sum_{u < t} w_u (Y_u^2 - sum_j G[u,j]^2 dB_j^2)

which is the off-diagonal double sum with coefficients
A_jk = c * sum_u w_u G[u,j] G[u,k] (diagonal terms j = k excluded).
"""

import math
from dataclasses import dataclass

import numpy as np

from .. import rng as rngmod
from ..quadrature import gauss01
from ..wavelet import _POLY_COEFS
from .paths import ModelParams, ProcessPath

U_NODES = 8
TAIL_TOL = 1e-3


class KernelTruncationError(ValueError):
    """The y-grid does not reach far enough below zero for the kernel tail."""


@dataclass(frozen=True, eq=False)
class ChaosGrid:
    edges: np.ndarray        # increasing y-cell edges; edges[-1] == t_max
    delta: float             # width of the uniform cells
    t_max: float
    near: float              # uniform cells cover [-near, t_max]

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def lower(self):
        return -float(self.edges[0])

    @property
    def n_cells(self):
        return self.edges.size - 1

    def u_rule(self):
        """Nodes and weights for the u-integral on [0, t_max]."""
        n_u = int(round(self.t_max / self.delta))
        g, gw = gauss01(U_NODES)
        left = np.arange(n_u) * self.delta
        nodes = (left[:, None] + self.delta * g).ravel()
        weights = np.tile(self.delta * gw, n_u)
        return nodes, weights

    def edge_index(self, y):
        i = int(np.argmin(np.abs(self.edges - y)))
        if abs(self.edges[i] - y) > 1e-9 * max(1.0, abs(y)):
            raise ValueError(f"{y} is not a cell edge of the chaos grid")
        return i

    def extended(self, factor, growth=1.1):
        """Same grid with geometric cells continued down to factor * T0."""
        return ChaosGrid(_geometric_extension(self.edges, self.delta, factor * self.lower, growth),
                         self.delta, self.t_max, self.near)


def _geometric_extension(edges, delta, depth, growth):
    lo = edges[0]
    width = max(edges[1] - edges[0], delta)
    new = []
    while lo > -depth:
        width *= growth
        lo -= width
        new.append(lo)
    return np.concatenate([new[::-1], edges])


def build_grid(t_max=1.0, cells=1024, near=3.0, depth=None, growth=1.1, params=None,
               tail_tol=TAIL_TOL):
    """Chaos grid with `cells` uniform cells on [-near, t_max].

    `near` is rounded to a whole number of cells so that 0 is an edge. If
    `depth` (= T0) is not given it is grown by factors of 100 until the
    estimated kernel mass below -T0 falls under `tail_tol` for `params`.
    """
    delta = (t_max + near) / cells
    k = int(round(near / delta))
    near = k * delta
    uniform = -near + np.arange(cells + 1) * delta
    uniform[k] = 0.0
    uniform[-1] = t_max
    if depth is not None:
        return ChaosGrid(_geometric_extension(uniform, delta, depth, growth), delta, t_max, near)
    if params is None:
        raise ValueError("need params to choose the truncation depth adaptively")
    depth = 100.0 * max(near, t_max)
    while True:
        grid = ChaosGrid(_geometric_extension(uniform, delta, depth, growth), delta, t_max, near)
        if tail_fraction(params, grid) < tail_tol:
            return grid
        depth *= 100.0
        if depth > 1e40:
            raise KernelTruncationError(
                f"kernel tail above {tail_tol:g} even at T0=1e40 (q={params.order}, H={params.hurst})")


def kernel_averages(params, grid, u):
    """G[u, j]: mean of (u - y)_+^{-alpha} over cell j."""
    e = 1.0 - params.kernel_exponent
    lo, hi = grid.edges[:-1], grid.edges[1:]
    u = np.asarray(u, dtype=float)[:, None]
    a = np.clip(u - lo, 0.0, None) ** e
    b = np.clip(u - hi, 0.0, None) ** e
    return (a - b) / (e * (hi - lo))


def _coefficient_matrix(params, grid, weights, G):
    """Kernel coefficients with c = 1: vector (q=1) or matrix (q=2) over cells."""
    if params.order == 1:
        return weights @ G
    return (G * weights[:, None]).T @ G


def _sq_norm(params, coef, widths, mask=None):
    """Deterministic second moment of the chaos integral with given coefficients."""
    if params.order == 1:
        v = coef**2 * widths
        return float(np.sum(v if mask is None else v[mask]))
    w2 = coef**2 * widths[:, None] * widths[None, :]
    np.fill_diagonal(w2, 0.0)
    if mask is not None:
        w2 = w2[mask]
    return 2.0 * float(np.sum(w2))


def _check_order(params):
    if params.order not in (1, 2):
        raise ValueError("chaos-grid backend supports q = 1 or 2 only")


def grid_norm(params, grid, t):
    """q! ||L_t||^2 on the grid with c = 1."""
    _check_order(params)
    u, w = grid.u_rule()
    w = np.where(u < t, w, 0.0)
    G = kernel_averages(params, grid, u)
    return _sq_norm(params, _coefficient_matrix(params, grid, w, G), grid.widths)


def tail_fraction(params, grid, factor=100.0):
    """Estimated share of ||L_t||^2 carried by y < -T0, t = t_max.

    The mass on (-factor*T0, -T0] is measured directly and extrapolated with
    the tail decay T0^{-2(1-H)/q} to cover everything below -T0.
    """
    base = grid_norm(params, grid, grid.t_max)
    ext = grid_norm(params, grid.extended(factor), grid.t_max)
    kappa = 2.0 * (1.0 - params.hurst) / params.order
    return max(ext - base, 0.0) / (1.0 - factor**-kappa) / ext


def normalize_cqh(params, grid):
    """c making q! ||L_1||^2 = 1 on this grid (t_max^{2H} at t_max if t_max < 1)."""
    t = 1.0 if grid.t_max >= 1.0 else grid.t_max
    return math.sqrt(t ** (2 * params.hurst) / grid_norm(params, grid, t))


def _prepare(params, grid):
    _check_order(params)
    frac = tail_fraction(params, grid)
    if frac >= TAIL_TOL:
        raise KernelTruncationError(
            f"kernel mass below -T0={grid.lower:g} is {frac:.2e} of the total (limit {TAIL_TOL:g})")
    c = params.c_qH if params.c_qH is not None else normalize_cqh(params, grid)
    return c


def _increments(grid, seed, rep_ids):
    sd = np.sqrt(grid.widths)
    out = np.empty((grid.n_cells, len(rep_ids)))
    for i, r in enumerate(rep_ids):
        out[:, i] = sd * rngmod.stream(seed, r, rngmod.CHAOS_INCREMENTS).standard_normal(grid.n_cells)
    return out


def _integrand(params, G, dB):
    Y = G @ dB
    if params.order == 1:
        return Y
    return Y**2 - (G**2) @ (dB**2)


def simulate_chaos_batch(params, grid, t_list, seed, reps, first_rep=0):
    """Z at t_list for replications first_rep..first_rep+reps-1; shape (reps, len(t_list))."""
    c = _prepare(params, grid)
    u, w = grid.u_rule()
    G = kernel_averages(params, grid, u)
    t_list = np.atleast_1d(np.asarray(t_list, dtype=float))
    for t in t_list:
        if t != 0.0:
            grid.edge_index(t)
        if t < 0 or t > grid.t_max + 1e-12:
            raise ValueError(f"time {t} outside [0, {grid.t_max}]")
    out = np.empty((reps, t_list.size))
    batch = 256
    for s in range(0, reps, batch):
        ids = range(first_rep + s, first_rep + min(reps, s + batch))
        f = _integrand(params, G, _increments(grid, seed, ids)) * w[:, None]
        for j, t in enumerate(t_list):
            out[s:s + len(ids), j] = c * np.sum(f[u < t], axis=0)
    return out


def simulate_chaos_grid(params, grid, t_list, seed, rep_id=0):
    """Z^{(q,H)} at the times t_list (grid edges in [0, t_max]) for one realization."""
    return simulate_chaos_batch(params, grid, t_list, seed, 1, rep_id)[0]


def simulate_chaos_path(params, n, step, seed, near_factor=3.0, rep_id=0):
    """Chaos-grid path on {0, step, ..., n*step} (small n only: cost ~ n^2)."""
    t_max = n * step
    cells = int(round((1.0 + near_factor) * n))
    grid = build_grid(t_max, cells, near_factor * t_max, params=params)
    c = _prepare(params, grid)
    u, w = grid.u_rule()
    G = kernel_averages(params, grid, u)
    f = _integrand(params, G, _increments(grid, seed, [rep_id]))[:, 0] * w
    per_cell = f.reshape(-1, U_NODES).sum(axis=1)
    values = np.concatenate([[0.0], c * np.cumsum(per_cell)])
    return ProcessPath(ModelParams(params.order, params.hurst, c), float(step), values,
                       "chaos-grid", int(seed))


def wavelet_tail_integral(spec, s):
    """int_s^1 psi(x) dx for s in [0, 1]."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    if spec.kind == "poly":
        P = np.polynomial.Polynomial(_POLY_COEFS).integ()
        return P(1.0) - P(s)
    if spec.kind == "haar":
        return np.where(s <= 0.5, -s, s - 1.0)
    x, v = spec.grid, spec.table
    h = x[1] - x[0]
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (v[1:] + v[:-1]))])
    i = np.clip(np.floor(s / h).astype(int), 0, x.size - 2)
    frac = s - x[i]
    slope = (v[i + 1] - v[i]) / h
    partial = v[i] * frac + 0.5 * slope * frac**2
    return cum[-1] - (cum[i] + partial)


@dataclass
class CoefficientParts:
    tilde: np.ndarray
    check: np.ndarray
    total: np.ndarray
    var_tilde: float         # deterministic second moments from the isometry
    var_check: float
    var_total: float


def decompose_coefficient_batch(params, grid, spec, a, k, M, seed, reps, first_rep=0):
    """Split c(a,k) into the part with all cells inside (a(k-M), a(k+1)) and the rest.

    The coefficient is c sqrt(a) int_{ak}^{a(k+1)} W(u/a - k) :Y_u^q: du with
    W(s) = int_s^1 psi. Pass M = inf for the whole half-line (empty check part).
    """
    c = _prepare(params, grid)
    lo_t, hi_t = a * k, a * (k + 1)
    if lo_t < 0 or hi_t > grid.t_max + 1e-12:
        raise ValueError("coefficient window outside [0, t_max]")
    hi_i = grid.edge_index(hi_t)
    if lo_t > 0:
        grid.edge_index(lo_t)
    lo_i = 0 if math.isinf(M) else grid.edge_index(a * (k - M))
    inside = np.zeros(grid.n_cells, dtype=bool)
    inside[lo_i:hi_i] = True

    u, w = grid.u_rule()
    sel = (u > lo_t) & (u < hi_t)
    u = u[sel]
    w = w[sel] * c * math.sqrt(a) * wavelet_tail_integral(spec, u / a - k)
    G = kernel_averages(params, grid, u)
    Gin, Gout = G * inside, G * ~inside

    coef = _coefficient_matrix(params, grid, w, G)
    widths = grid.widths
    var_total = _sq_norm(params, coef, widths)
    if params.order == 1:
        var_tilde = _sq_norm(params, coef, widths, inside)
    else:
        var_tilde = _sq_norm(params, coef, widths, np.outer(inside, inside))
    var_check = var_total - var_tilde

    tilde = np.empty(reps)
    check = np.empty(reps)
    total = np.empty(reps)
    batch = 256
    for s in range(0, reps, batch):
        ids = range(first_rep + s, first_rep + min(reps, s + batch))
        dB = _increments(grid, seed, ids)
        sl = slice(s, s + len(ids))
        total[sl] = w @ _integrand(params, G, dB)
        yin, yout = Gin @ dB, Gout @ dB
        if params.order == 1:
            tilde[sl] = w @ yin
            check[sl] = w @ yout
        else:
            pin, pout = (Gin**2) @ (dB**2), (Gout**2) @ (dB**2)
            tilde[sl] = w @ (yin**2 - pin)
            check[sl] = w @ (yout**2 - pout + 2.0 * yin * yout)
    return CoefficientParts(tilde, check, total, var_tilde, var_check, var_total)


def decompose_coefficient(params, grid, spec, a, k, M, seed, rep_id=0):
    """(tilde, check) for one realization; tilde + check is the full coefficient."""
    parts = decompose_coefficient_batch(params, grid, spec, a, k, M, seed, 1, rep_id)
    return float(parts.tilde[0]), float(parts.check[0])
