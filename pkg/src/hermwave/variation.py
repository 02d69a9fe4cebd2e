"""Sparse index sets, discrete wavelet coefficients E_M(l, N) and the statistics S_hat, V_hat."""

import csv
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .wavelet import _evaluate

log = logging.getLogger(__name__)

MEMORY_ENV = "HERMWAVE_MEMORY_CEILING"
DEFAULT_CEILING = 4 * 2**30


class CoverageError(ValueError):
    """The path grid does not reach the times a coefficient needs."""


class DegenerateCoefficientsError(ValueError):
    """All coefficients at a scale vanish, so log S_hat is undefined."""


class ResourceError(ValueError):
    """A simulation plan exceeds the memory ceiling."""


def _floor_pow(N, e):
    # guard against N**e landing a hair below an integer
    return int(math.floor(N**e * (1.0 + 1e-12)))


@dataclass(frozen=True)
class IndexParams:
    N: int
    beta: float
    gamma: float
    d: int = 3

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        if not 0.0 < self.gamma < self.beta < 1.0:
            raise ValueError(f"need 0 < gamma < beta < 1, got beta={self.beta}, gamma={self.gamma}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"number of scales d must be a positive integer, got {self.d}")
        if self.nb + self.ng > self.N:
            log.warning("[N^gamma] + [N^beta] = %d exceeds N = %d", self.nb + self.ng, self.N)

    @property
    def nb(self):
        """[N^beta]"""
        return _floor_pow(self.N, self.beta)

    @property
    def ng(self):
        """[N^gamma]"""
        return _floor_pow(self.N, self.gamma)

    @property
    def card(self):
        return min(2 ** (self.N - self.nb), 2**self.ng)

    @property
    def spacing(self):
        """e_{l+1} - e_l = 2^{[N^beta] - N}."""
        return 2.0 ** (self.nb - self.N)


def index_sets(params):
    """(L_N, L_{N,gamma}) as integer ranges starting at 1."""
    full = range(1, 2 ** (params.N - params.nb) + 1)
    sub = range(1, params.card + 1)
    return full, sub


def grid_point(ell, params):
    """e_{l,N,beta} = l 2^{[N^beta]} / 2^N (exact dyadic)."""
    if not 1 <= ell <= 2 ** (params.N - params.nb):
        raise ValueError(f"position {ell} outside L_N")
    return math.ldexp(float(ell), params.nb - params.N)


def expected_square(M, N, hurst, cpsi):
    """E[A_M(l,N)^2] = (M 2^N)^{-(2H+1)} C(H)."""
    return (M * 2.0**N) ** (-(2 * hurst + 1)) * cpsi


@dataclass(frozen=True)
class PathPlan:
    n: int
    step: float
    horizon: float
    bytes: int
    ceiling: int

    @property
    def deficit(self):
        return max(0, self.bytes - self.ceiling)


def memory_ceiling():
    raw = os.environ.get(MEMORY_ENV)
    if not raw:
        return DEFAULT_CEILING
    mult = {"K": 2**10, "M": 2**20, "G": 2**30}
    raw = raw.strip().upper().rstrip("B")
    if raw[-1:] in mult:
        return int(float(raw[:-1]) * mult[raw[-1]])
    return int(raw)


def plan_resources(index, R=None, d=None, inner_factor=1, ceiling=None):
    """Smallest uniform grid covering every coefficient time, with a byte estimate.

    step = 1/(R d 2^N), horizon = e_max + 2^{-N}. The estimate counts the path
    plus the circulant-embedding work arrays (~64 bytes per noise sample).
    Raises ResourceError, stating the deficit, when over the ceiling.
    """
    R = 2**index.N if R is None else R
    d = index.d if d is None else d
    ceiling = memory_ceiling() if ceiling is None else ceiling
    scale = R * d * 2**index.N
    e_max = grid_point(index.card, index)
    horizon = e_max + 2.0**-index.N
    n = int(math.ceil(horizon * scale - 1e-9))
    nbytes = 8 * (n + 1) + 64 * n * inner_factor
    plan = PathPlan(n, 1.0 / scale, horizon, nbytes, ceiling)
    if plan.deficit:
        raise ResourceError(
            f"plan needs {nbytes} bytes, ceiling {ceiling} ({MEMORY_ENV}); deficit {plan.deficit} bytes")
    return plan


def check_resolution(step, index, R=None):
    """Reject path grids coarser than 1/(R d 2^N), the spacing the coefficients need."""
    R = 2**index.N if R is None else R
    need = 1.0 / (R * index.d * 2**index.N)
    if step > need * (1 + 1e-12):
        raise CoverageError(f"path step {step!r} is coarser than the required {need!r} "
                            f"(R={R}, d={index.d}, N={index.N})")
    return need


class CoefficientPlan:
    """Snapped path indices and weights for all E_M(l,N), M = 1..d, l in L_{N,gamma}.

    Built once per (index, wavelet, R, step) and applied to many paths.
    """

    def __init__(self, index, spec, R, step, scales=None, ells=None):
        if R < 64:
            raise ValueError("need R >= 64 quadrature nodes")
        self.index, self.spec, self.R, self.step = index, spec, R, step
        self.scales = np.arange(1, index.d + 1) if scales is None else np.asarray(scales)
        self.ells = np.arange(1, index.card + 1) if ells is None else np.asarray(ells)
        e = self.ells * index.spacing
        k = np.arange(1, R + 1)
        width = 1.0 / (self.scales * 2.0**index.N)
        times = e[None, :, None] + (k / R)[None, None, :] * width[:, None, None]
        pos = times / step
        idx = np.floor(pos + 0.5).astype(np.int64)
        assert np.all(np.abs(idx - pos) <= 0.5 + 1e-9)
        self.idx = idx
        self.t_max = float(times.max())
        self.weights = _evaluate(spec, k / R) / R
        self.norm = np.sqrt(width)

    def apply(self, values):
        values = np.asarray(values)
        if self.idx.max() >= values.size:
            raise CoverageError(
                f"path covers [0, {(values.size - 1) * self.step:.6g}] but coefficients need "
                f"times up to {self.t_max:.6g}")
        return self.norm[:, None] * (values[self.idx] @ self.weights)


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    index: object
    R: int
    ells: np.ndarray
    values: np.ndarray                 # shape (d, |L_{N,gamma}|), row M-1
    reference: np.ndarray | None = None
    R_fine: int | None = None

    def scale(self, M):
        return self.values[M - 1]

    def keys(self):
        return [(int(M), int(l)) for M in range(1, self.values.shape[0] + 1) for l in self.ells]

    def rows(self):
        for M in range(1, self.values.shape[0] + 1):
            for j, l in enumerate(self.ells):
                yield M, int(l), grid_point(int(l), self.index), float(self.values[M - 1, j])


def discrete_coefficient(path, spec, ell, M, params, R):
    """sqrt(1/(M2^N)) (1/R) sum_{k=1}^R psi(k/R) Z(e_l + (k/R)/(M2^N)), nearest-node lookup."""
    grid_point(ell, params)
    plan = CoefficientPlan(params, spec, R, path.step, scales=[M], ells=[ell])
    return float(plan.apply(path.values)[0, 0])


def quadrature_coefficient(path, spec, ell, M, params, R_fine):
    """Fine-node stand-in for the continuous coefficient A_M(l,N)."""
    if R_fine < 4 * 2**params.N:
        raise ValueError(f"R_fine must be >= 4*2^N = {4 * 2**params.N}")
    return discrete_coefficient(path, spec, ell, M, params, R_fine)


def collect_coefficients(path, spec, params, R=None, R_fine=None, plan=None):
    """All E_M(l,N) for M = 1..d and l in L_{N,gamma} (and A_M references if R_fine)."""
    R = 2**params.N if R is None else R
    plan = plan or CoefficientPlan(params, spec, R, path.step)
    ref = None
    if R_fine is not None:
        if R_fine < 4 * 2**params.N:
            raise ValueError(f"R_fine must be >= 4*2^N = {4 * 2**params.N}")
        ref = CoefficientPlan(params, spec, R_fine, path.step).apply(path.values)
    return CoefficientSet(params, R, plan.ells, plan.apply(path.values), ref, R_fine)


def discretization_residuals(coeffs, hurst, cpsi):
    """t_{N,M}(l) = (A_M - E_M) / sqrt(E[A_M^2]); needs reference coefficients."""
    if coeffs.reference is None:
        raise ValueError("coefficient set has no reference coefficients")
    M = np.arange(1, coeffs.values.shape[0] + 1)
    sd = np.sqrt(expected_square(M, coeffs.index.N, hurst, cpsi))
    return (coeffs.reference - coeffs.values) / sd[:, None]


def shat(coeffs, M):
    """S_hat_{N,M}: mean of E_M(l,N)^2 over l."""
    v = coeffs.scale(M)
    if not np.any(v != 0.0):
        raise DegenerateCoefficientsError(f"all coefficients at scale M={M} are zero")
    return float(np.mean(v**2))


def vhat(coeffs, M, true_H, cpsi):
    """V_hat_{N,M} = |L|^{-1/2} sum_l (E^2 / E[A^2] - 1), normalized with the true H."""
    if not cpsi > 0:
        raise ValueError("cpsi must be positive")
    v = coeffs.scale(M)
    ea2 = expected_square(M, coeffs.index.N, true_H, cpsi)
    return float(np.sum(v**2 / ea2 - 1.0) / math.sqrt(v.size))


@dataclass(frozen=True)
class VariationStats:
    shat: np.ndarray
    vhat: np.ndarray | None
    count: int


def variation_stats(coeffs, true_H=None, cpsi=None):
    d = coeffs.values.shape[0]
    s = np.array([shat(coeffs, M) for M in range(1, d + 1)])
    v = None
    if true_H is not None:
        v = np.array([vhat(coeffs, M, true_H, cpsi) for M in range(1, d + 1)])
    return VariationStats(s, v, coeffs.values.shape[1])


def write_coefficients_csv(coeffs, filename):
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["M", "ell", "e_point", "E_value"])
        for M, l, e, v in coeffs.rows():
            w.writerow([M, l, repr(e), repr(v)])


def write_shat_csv(stats, filename):
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["M", "shat", "count"])
        for M, s in enumerate(stats.shat, start=1):
            w.writerow([M, repr(float(s)), stats.count])
