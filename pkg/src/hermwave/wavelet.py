"""Analyzing wavelets supported on [0, 1] and the constants derived from them.

Three concrete families are provided:

* ``poly``  -- kappa * x^2 (1-x)^2 (1-2x), unit L2 norm, one vanishing moment,
  continuously differentiable after zero extension (the default);
* ``haar``  -- the +1/-1 step, kept only as a closed-form oracle (not C^1);
* ``db<N>`` -- Daubechies wavelets tabulated on a dyadic grid by an exact
  dyadic cascade and rescaled from [0, 2N-1] onto [0, 1].

The variance normalizer C(H) = -1/2 int int psi(x) psi(y) |x-y|^{2H} and the
cross-scale covariances E[c(a,0) c(b,0)] are computed by a composite
Gauss-Legendre rule whose cells are aligned with the kink line x = rho*y of
the kernel; cells touched by that line are integrated with a Duffy split and
Gauss-Jacobi weights, which makes polynomial wavelets exact to rounding.
"""

import csv
import functools
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .quadrature import composite_nodes, gauss01, jacobi01, merge_edges

log = logging.getLogger(__name__)

POLY_KAPPA = math.sqrt(6930.0)
# x^2 (1-x)^2 (1-2x) = x^2 - 4x^3 + 5x^4 - 2x^5, low degree first
_POLY_COEFS = np.array([0.0, 0.0, 1.0, -4.0, 5.0, -2.0]) * POLY_KAPPA

DEFAULT_RESOLUTION_LOG2 = 12


class WaveletError(ValueError):
    """Invalid wavelet configuration or failed wavelet contract."""


@dataclass(frozen=True, eq=False)
class WaveletSpec:
    """An analyzing function on [0, 1] together with its dyadic tabulation.

    ``table`` holds psi at i / 2**resolution_log2 for i = 0..2**resolution_log2.
    ``breakpoints`` lists interior points where psi is not smooth; quadrature
    cells are aligned with them. Instances are immutable and hash by identity.
    """

    kind: str
    vanishing_moments: int
    resolution_log2: int
    table: np.ndarray = field(repr=False)
    order: int | None = None
    breakpoints: tuple = ()
    smooth: bool = True

    support = (0.0, 1.0)

    @property
    def name(self):
        if self.kind == "daubechies":
            return f"db{self.order}"
        return self.kind

    @property
    def grid(self):
        return np.linspace(0.0, 1.0, self.table.size)

    def __call__(self, x):
        return eval_wavelet(self, x)


def _evaluate(spec, x):
    x = np.asarray(x, dtype=float)
    inside = (x >= 0.0) & (x <= 1.0)
    if spec.kind == "poly":
        out = np.polynomial.polynomial.polyval(x, _POLY_COEFS)
    elif spec.kind == "haar":
        out = np.where(x <= 0.5, 1.0, -1.0)
        inside = inside & (x > 0.0)
    else:
        out = np.interp(x, spec.grid, spec.table)
    return np.where(inside, out, 0.0)


def eval_wavelet(spec, x):
    """psi(x); zero outside [0, 1]. Tabulated kinds interpolate linearly."""
    out = _evaluate(spec, x)
    return float(out) if out.ndim == 0 else out


def _make(kind, q, resolution_log2, fn=None, **kw):
    if resolution_log2 < 1:
        raise WaveletError("resolution_log2 must be >= 1")
    x = np.linspace(0.0, 1.0, 2**resolution_log2 + 1)
    tmp = WaveletSpec(kind, q, resolution_log2, np.zeros(0), **kw)
    table = fn(x) if fn is not None else _evaluate(tmp, x)
    table = np.asarray(table, dtype=float)
    table.setflags(write=False)
    return WaveletSpec(kind, q, resolution_log2, table, **kw)


def polynomial_bump(resolution_log2=DEFAULT_RESOLUTION_LOG2):
    return _make("poly", 1, resolution_log2)


def haar(resolution_log2=DEFAULT_RESOLUTION_LOG2):
    """Haar step: +1 on (0, 1/2], -1 on (1/2, 1]. Oracle use only (not C^1)."""
    return _make("haar", 1, resolution_log2, breakpoints=(0.5,), smooth=False)


def tabulated(values, vanishing_moments=1):
    """Wavelet given by its values on a uniform dyadic grid over [0, 1]."""
    values = np.asarray(values, dtype=float)
    r = int(round(math.log2(values.size - 1))) if values.size > 2 else -1
    if r < 1 or values.size != 2**r + 1:
        raise WaveletError("table length must be 2**r + 1")
    values = values.copy()
    values.setflags(write=False)
    return WaveletSpec("tabulated", vanishing_moments, r, values)


def _scaling_at_integers(h):
    L = h.size
    A = np.zeros((L, L))
    for n in range(L):
        for k in range(L):
            if 0 <= 2 * n - k < L:
                A[n, 2 * n - k] += math.sqrt(2.0) * h[k]
    # phi vanishes at both ends of its support; solve (A - I) phi = 0, sum phi = 1
    sys = np.vstack([A - np.eye(L), np.ones(L)])
    rhs = np.zeros(L + 1)
    rhs[-1] = 1.0
    phi, *_ = np.linalg.lstsq(sys, rhs, rcond=None)
    return phi


def _refine(h, prev, j):
    """Values on the level-j dyadic grid from values on level j-1."""
    size = 2 * (prev.size - 1) + 1
    m = np.arange(size)
    out = np.zeros(size)
    shift = 2 ** (j - 1)
    for k, hk in enumerate(h):
        idx = m - k * shift
        ok = (idx >= 0) & (idx < prev.size)
        out[ok] += math.sqrt(2.0) * hk * prev[idx[ok]]
    return out


def daubechies_dyadic(order, level):
    """Daubechies wavelet on its natural support [0, 2*order-1].

    Returns (t, psi) with t = m / 2**level; values are exact at the dyadic
    nodes (up to rounding), obtained from the two-scale relation starting at
    the integer values of the scaling function.
    """
    import pywt

    h = np.asarray(pywt.Wavelet(f"db{order}").rec_lo, dtype=float)
    L = h.size
    g = np.array([(-1) ** k * h[L - 1 - k] for k in range(L)])
    phi = _scaling_at_integers(h)
    for j in range(1, level):
        phi = _refine(h, phi, j)
    psi = _refine(g, phi, level)
    t = np.arange(psi.size) / 2.0**level
    return t, psi


def build_daubechies(order, levels, resolution_log2=DEFAULT_RESOLUTION_LOG2):
    """Tabulated Daubechies wavelet with `order` vanishing moments on [0, 1]."""
    if order < 2:
        raise WaveletError("Daubechies order must be >= 2 (order 1 is Haar, not C^1)")
    if levels < 6:
        raise WaveletError("cascade levels must be >= 6")
    span = 2 * order - 1
    t, psi = daubechies_dyadic(order, levels)

    def fn(x):
        tt = span * x
        if levels >= resolution_log2:
            idx = np.rint(tt * 2.0**levels).astype(np.int64)
            vals = psi[idx]
        else:
            vals = np.interp(tt, t, psi)
        return math.sqrt(span) * vals

    x = np.linspace(0.0, 1.0, 2**resolution_log2 + 1)
    table = _cancel_moments(x, fn(x), order)
    spec = _make("daubechies", order, resolution_log2, fn=lambda _: table, order=order)
    verify_vanishing_moments(spec, order - 1, 1e-6)
    return spec


def _cancel_moments(x, table, q):
    """Remove the first q moments of a piecewise-linear tabulation.

    The rescaled support is not dyadic, so the interpolant carries a small
    moment defect (~1e-6 for db2/db3 at 2^12 nodes, the size of the
    interpolation error itself). It is cancelled by adding a combination of
    x^j * x^2 (1-x)^2, which keeps both endpoints at zero.
    """
    nodes, w = composite_nodes(x, 8)
    nodes, w = nodes.ravel(), w.ravel()
    interp = lambda v: np.interp(nodes, x, v)
    basis = [x**j * x**2 * (1 - x) ** 2 for j in range(q)]
    G = np.array([[np.sum(w * nodes**p * interp(b)) for b in basis] for p in range(q)])
    m = np.array([np.sum(w * nodes**p * interp(table)) for p in range(q)])
    coef = np.linalg.solve(G, -m)
    log.debug("db%d moment defect %s", q, m)
    return table + sum(c * b for c, b in zip(coef, basis))


def wavelet_from_name(name, resolution_log2=DEFAULT_RESOLUTION_LOG2):
    """Parse 'poly', 'haar' or 'db<order>'."""
    if name in ("poly", "polynomial-bump"):
        return polynomial_bump(resolution_log2)
    if name == "haar":
        return haar(resolution_log2)
    m = re.fullmatch(r"db(\d+)", name)
    if m:
        return build_daubechies(int(m.group(1)), max(resolution_log2, 6), resolution_log2)
    raise WaveletError(f"unknown wavelet {name!r}; expected poly, haar or db<order>")


@dataclass
class MomentReport:
    moments: list
    tol: float
    passed: bool
    failed_at: int | None


def _moment_rule(spec):
    if spec.kind in ("poly", "haar"):
        edges = merge_edges([0.0, 1.0, *spec.breakpoints],
                            np.linspace(0, 1, 2**spec.resolution_log2 + 1)[1:-1],
                            0.0)
        return composite_nodes(edges, 8)
    # piecewise linear: 8 nodes per table cell integrate x^p * psi exactly for p <= 13
    return composite_nodes(spec.grid, 8)


def verify_vanishing_moments(spec, p_max, tol):
    """|int x^p psi(x) dx| for p = 0..p_max.

    The report passes iff every listed moment is below `tol`. A failing
    moment with p below the wavelet's vanishing-moment count raises.
    """
    if p_max < 0 or tol <= 0:
        raise ValueError("need p_max >= 0 and tol > 0")
    x, w = _moment_rule(spec)
    x, w = x.ravel(), w.ravel()
    vals = w * _evaluate(spec, x)
    moments = [abs(float(np.sum(vals * x**p))) for p in range(p_max + 1)]
    bad = [p for p, m in enumerate(moments) if m >= tol]
    for p in bad:
        if p < spec.vanishing_moments:
            raise WaveletError(
                f"moment p={p} of {spec.name} is {moments[p]:.3e} >= tol {tol:g}")
    return MomentReport(moments, tol, not bad, bad[0] if bad else None)


@dataclass(frozen=True)
class WaveletConstant:
    hurst: float
    cpsi: float
    quadrature_error: float


def _kinks(spec):
    if spec.kind in ("poly", "haar"):
        return np.asarray(spec.breakpoints, dtype=float)
    return spec.grid[1:-1]


def _line_edges(spec, rho, n):
    """Cell edges in x and y such that the line x = rho*y runs through cell corners."""
    h = 1.0 / n
    brk = _kinks(spec)
    interior = np.arange(1, n) * h
    req_y = np.concatenate([[0.0, 1.0], brk, brk[brk <= rho] / rho])
    ye = merge_edges(req_y[req_y <= 1.0], interior, h)
    req_x = np.concatenate([rho * ye, [1.0], brk[brk > rho]])
    xe = merge_edges(req_x, interior[interior > rho], h)
    if not np.allclose(xe[: ye.size], rho * ye, rtol=0, atol=1e-13):
        raise WaveletError("quadrature edges lost alignment with the kernel line")
    return xe, ye


def _line_integral(spec, hurst, rho, n, m=None):
    """int_0^1 int_0^1 psi(x) psi(y) |x - rho*y|^{2H} dx dy for 0 < rho <= 1.

    Tabulated kinds put a cell edge at every table node (psi is linear on
    each cell), so fewer nodes per cell suffice there.
    """
    p = 2.0 * hurst
    if m is None:
        m = 16 if spec.kind in ("poly", "haar") else 6
    xe, ye = _line_edges(spec, rho, n)
    nx, ny = xe.size - 1, ye.size - 1
    xb, wxb = composite_nodes(xe, m)
    yb, wyb = composite_nodes(ye, m)
    fxb = wxb * _evaluate(spec, xb)
    fyb = wyb * _evaluate(spec, yb)
    xn, fx = xb.ravel(), fxb.ravel()
    yn, fy = rho * yb.ravel(), fyb.ravel()

    total = 0.0
    chunk = max(1, 2**21 // yn.size)
    for s in range(0, xn.size, chunk):
        ker = np.abs(xn[s:s + chunk, None] - yn[None, :]) ** p
        total += fx[s:s + chunk] @ ker @ fy

    diag = np.arange(ny)
    tl = np.arange(ny)[np.arange(ny) + 1 < nx]
    br = np.arange(ny - 1)
    I = np.concatenate([diag, tl + 1, br])
    J = np.concatenate([diag, tl, br + 1])
    ker = np.abs(xb[I][:, :, None] - rho * yb[J][:, None, :]) ** p
    total -= np.einsum("ka,kab,kb->", fxb[I], ker, fyb[J])

    wx, wy = np.diff(xe), np.diff(ye)
    s, ws = jacobi01(m, 0.0, p + 1.0)
    S = s[:, None]
    # diagonal cells: x - rho*y = wx (p - q) on the unit square
    t, wt = jacobi01(m, p, 0.0)
    T = t[None, :]
    x0, y0 = xe[diag][:, None, None], ye[diag][:, None, None]
    ax, ay = wx[diag][:, None, None], wy[diag][:, None, None]
    f = (_evaluate(spec, x0 + ax * S) * _evaluate(spec, y0 + ay * S * T)
         + _evaluate(spec, x0 + ax * S * T) * _evaluate(spec, y0 + ay * S))
    total += np.sum(wx[diag] ** (p + 1) * wy[diag] * np.einsum("a,b,kab->k", ws, wt, f))

    # corner cells: |x - rho*y| = A*p + B*q from the shared corner
    t, wt = gauss01(m)
    T = t[None, :]
    cx = np.concatenate([xe[tl + 1], xe[br + 1]])
    cy = np.concatenate([ye[tl + 1], ye[br + 1]])
    sx = np.concatenate([np.ones(tl.size), -np.ones(br.size)])
    cwx = np.concatenate([wx[tl + 1], wx[br]])
    cwy = np.concatenate([wy[tl], wy[br + 1]])
    A, B = cwx[:, None, None], rho * cwy[:, None, None]
    X0, Y0 = cx[:, None, None], cy[:, None, None]
    DX, DY = (sx * cwx)[:, None, None], (-sx * cwy)[:, None, None]
    f = ((A + B * T) ** p * _evaluate(spec, X0 + DX * S) * _evaluate(spec, Y0 + DY * S * T)
         + (A * T + B) ** p * _evaluate(spec, X0 + DX * S * T) * _evaluate(spec, Y0 + DY * S))
    total += np.sum(cwx * cwy * np.einsum("a,b,kab->k", ws, wt, f))
    return float(total)


@functools.lru_cache(maxsize=4096)
def _cached_line_integral(spec, hurst, rho, n, m=None):
    return _line_integral(spec, hurst, rho, n, m)


def _check_hurst(H, allow_half=False):
    lo_ok = H >= 0.5 if allow_half else H > 0.5
    if not (lo_ok and H < 1.0):
        raise WaveletError(f"Hurst parameter {H} outside (1/2, 1)")


def compute_cpsi(spec, H, resolution=8):
    """C(H) = -1/2 int int psi(x) psi(y) |x-y|^{2H} dx dy = E[c(1,0)^2].

    The error estimate is the change against a coarser rule: half as many
    cells for analytic kinds, fewer nodes per table cell for tabulated ones.
    """
    _check_hurst(H, allow_half=True)
    if resolution < 8:
        raise WaveletError("resolution must be >= 8")
    fine = -0.5 * _cached_line_integral(spec, float(H), 1.0, 2**resolution)
    if spec.kind in ("poly", "haar"):
        coarse = -0.5 * _cached_line_integral(spec, float(H), 1.0, 2 ** (resolution - 1))
    else:
        coarse = -0.5 * _cached_line_integral(spec, float(H), 1.0, 2**resolution, 4)
    if not fine > 0:
        raise WaveletError(f"non-positive variance constant {fine:.3e} for {spec.name} at H={H}")
    return WaveletConstant(float(H), fine, abs(fine - coarse))


def cross_scale_covariance(spec, H, a, b, resolution=8):
    """E[c(a,0) c(b,0)] = -1/2 sqrt(ab) int int psi(x) psi(y) |ax - by|^{2H} dx dy."""
    _check_hurst(H, allow_half=True)
    if not (a > 0 and b > 0):
        raise WaveletError("scales must be positive")
    hi, lo = (a, b) if a >= b else (b, a)
    rho = lo / hi
    J = _cached_line_integral(spec, float(H), float(rho), 2**resolution)
    return -0.5 * math.sqrt(hi * lo) * hi ** (2.0 * H) * J


def export_csv(spec, path):
    """Write the tabulation as CSV with columns x, psi."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "psi"])
        for x, v in zip(spec.grid, spec.table):
            w.writerow([repr(float(x)), repr(float(v))])
