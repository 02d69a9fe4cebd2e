"""Log-regression Hurst estimator and its asymptotic variance."""

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .hermite_sim.fgn import fgn_autocovariance, fgn_from_generator
from .hermite_sim.nclt import partial_sum_variance
from .wavelet import _evaluate, compute_cpsi, cross_scale_covariance

log = logging.getLogger(__name__)

ANALYTIC = "analytic-q1"
MONTE_CARLO = "monte-carlo"


@dataclass(frozen=True)
class RegressionDesign:
    """Rows (log M, 1) for M = 1..d and the OLS projection onto (slope, intercept)."""

    d: int
    matrix: np.ndarray = field(init=False, repr=False)
    pinv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("log-regression needs d >= 2 scales")
        L = np.column_stack([np.log(np.arange(1, self.d + 1)), np.ones(self.d)])
        object.__setattr__(self, "matrix", L)
        object.__setattr__(self, "pinv", np.linalg.solve(L.T @ L, L.T))


@functools.lru_cache(maxsize=32)
def design(d):
    return RegressionDesign(d)


@dataclass(frozen=True)
class EstimationResult:
    hhat: float
    shat: tuple
    N: int
    d: int
    slope: float
    intercept: float
    residuals: tuple


def estimate_hurst(shat, N, d):
    """H_hat = -slope/2 - 1/2 for the OLS fit log S_hat_M = slope log M + c."""
    s = np.asarray(shat, dtype=float)
    if s.size != d:
        raise ValueError(f"expected {d} statistics, got {s.size}")
    if d < 2:
        raise ValueError("log-regression needs d >= 2 scales")
    if not np.all(s > 0):
        raise ValueError("all S_hat values must be positive")
    D = design(d)
    y = np.log(s)
    slope, intercept = D.pinv @ y
    resid = y - D.matrix @ np.array([slope, intercept])
    return EstimationResult(float(-slope / 2 - 0.5), tuple(s.tolist()), N, d, float(slope),
                            float(intercept), tuple(resid.tolist()))


@dataclass(frozen=True)
class KMatrix:
    matrix: np.ndarray
    provenance: str
    cpsi: float
    fourth_moment: float          # E[c(1,0)^4]
    cross_moments: np.ndarray     # E[c(1/M1,0)^2 c(1/M2,0)^2]
    stderr: np.ndarray | None = None

    def to_dict(self):
        out = {"K": self.matrix.tolist(), "provenance": self.provenance, "cpsi": self.cpsi,
               "fourth_moment": self.fourth_moment, "cross_moments": self.cross_moments.tolist()}
        if self.stderr is not None:
            out["stderr"] = self.stderr.tolist()
        return out


def kmatrix_analytic_q1(spec, H, d, resolution=8):
    """K for q = 1, where Isserlis reduces every fourth moment to covariances.

    K_MM = 2 and K_{M1 M2} = 2 (M1 M2)^{2H+1} Cov(c(1/M1,0), c(1/M2,0))^2 / C^2.
    """
    C = compute_cpsi(spec, H, resolution).cpsi
    M = np.arange(1, d + 1)
    cov = np.array([[cross_scale_covariance(spec, H, 1.0 / a, 1.0 / b, resolution) for b in M]
                    for a in M])
    var = np.diag(cov)
    cross = np.outer(var, var) + 2.0 * cov**2
    K = 2.0 * np.outer(M, M) ** (2 * H + 1) * cov**2 / C**2
    np.fill_diagonal(K, 2.0)
    return KMatrix(K, ANALYTIC, C, 3.0 * C**2, cross)


def _coefficient_weights(spec, d, R):
    """Path grid and weights so that c(1/M, 0) = sum_j W[M-1, j] Z(j / (lcm R)).

    The grid 1/(R * lcm(1..d)) contains every node k/(R M) exactly.
    """
    lcm = math.lcm(*range(1, d + 1))
    n = R * lcm
    W = np.zeros((d, n + 1))
    k = np.arange(1, R + 1)
    psi = _evaluate(spec, k / R) / R
    for M in range(1, d + 1):
        W[M - 1, k * (lcm // M)] = psi * math.sqrt(1.0 / M)
    return W, n


def _path_covariance(params, n, inner):
    """Covariance of the simulated path at j/n, j = 0..n.

    q = 1 gives the fBm covariance; for NCLT paths it is built from the exact
    partial-sum variances V(k), Cov(S_a, S_b) = (V(a) + V(b) - V(|a-b|)) / 2.
    """
    if params.order == 1:
        t = np.arange(n + 1) / n
        v = t ** (2 * params.hurst)
    else:
        k = np.arange(n + 1) * inner
        v = _partial_sum_variances(params.order, params.fgn_hurst, n * inner)[k]
        v = v / v[-1]
    j = np.arange(n + 1)
    return 0.5 * (v[:, None] + v[None, :] - v[np.abs(j[:, None] - j[None, :])])


def _partial_sum_variances(order, h0, m):
    """V(k) = q! sum_{|j|<k} (k-|j|) r(j)^q for k = 0..m."""
    a = fgn_autocovariance(np.arange(1, m), h0) ** order
    A = np.concatenate([[0.0], np.cumsum(a)])
    B = np.concatenate([[0.0], np.cumsum(np.arange(1, m) * a)])
    k = np.arange(1, m + 1)
    v = k + 2.0 * (k * A[k - 1] - B[k - 1])
    return math.factorial(order) * np.concatenate([[0.0], v])


def kmatrix_montecarlo(params, spec, d, replications, seed, R=256, inner_factor=64, batch=500):
    """K from simulated coefficients c(1/M, 0) on [0, 1].

    The moments E[c_1^2 c_2^2] are estimated by Monte Carlo and normalized by
    the exact second moments of the same discretized coefficients, taken from
    the exact covariance of the simulated path. Diagonal entries are pooled
    over M. Paths: exact fBm for q = 1, NCLT partial sums otherwise.
    """
    if replications < 1000:
        raise ValueError("kmatrix_montecarlo needs >= 1000 replications")
    H, q = params.hurst, params.order
    W, n = _coefficient_weights(spec, d, R)
    if q == 1:
        m, inner, h0, scale = n, 1, H, n ** (-H)
    else:
        m, inner, h0 = n * inner_factor, inner_factor, params.fgn_hurst
        scale = 1.0 / math.sqrt(partial_sum_variance(q, h0, m))
    var = np.einsum("mi,ij,mj->m", W, _path_covariance(params, n, inner), W)
    herm = np.zeros(q + 1)
    herm[-1] = 1.0

    coefs = np.empty((replications, d))
    for s in range(0, replications, batch):
        for r in range(s, min(replications, s + batch)):
            gen = rngmod.stream(seed, r, rngmod.KMATRIX)
            x = fgn_from_generator(h0, max(m, 2), gen)[:m]
            if q > 1:
                x = np.polynomial.hermite_e.hermeval(x, herm)
            z = np.concatenate([[0.0], np.cumsum(x)[inner - 1::inner]]) * scale
            coefs[r] = W @ z

    sq = coefs**2 / var
    prod = sq[:, :, None] * sq[:, None, :]
    K = prod.mean(axis=0) - 1.0
    se = prod.std(axis=0, ddof=1) / math.sqrt(replications)
    pooled = np.mean(sq**2, axis=1)
    K[np.diag_indices(d)] = pooled.mean() - 1.0
    se[np.diag_indices(d)] = pooled.std(ddof=1) / math.sqrt(replications)
    K = 0.5 * (K + K.T)

    big = se > 0.2 * np.abs(K)
    if np.any(big):
        log.warning("kmatrix_montecarlo: standard errors exceed 20%% of %d entries", int(big.sum()))
    C = var[0]
    cross = (K + 1.0) * np.outer(var, var)
    return KMatrix(K, MONTE_CARLO, float(C), float(cross[0, 0]), cross, se)


def asymptotic_sigma2(K, d):
    """sigma^2 = 1/4 [ (L'L)^{-1} L' K L (L'L)^{-1} ]_{slope, slope}."""
    K = np.asarray(getattr(K, "matrix", K), dtype=float)
    if K.shape != (d, d):
        raise ValueError(f"K must be {d}x{d}")
    if not np.allclose(K, K.T, rtol=1e-12, atol=1e-14):
        raise ValueError("K must be symmetric")
    P = design(d).pinv
    return float(0.25 * (P @ K @ P.T)[0, 0])
