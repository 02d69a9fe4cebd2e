"""Monte Carlo experiments: simulate, extract coefficients, estimate, aggregate."""

import csv
import functools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from .estimator import asymptotic_sigma2, estimate_hurst, kmatrix_analytic_q1, kmatrix_montecarlo
from .hermite_sim import ModelParams, simulate_chaos_path, simulate_fbm_exact, simulate_hermite_nclt
from .hermite_sim.chaos import U_NODES
from .variation import (CoefficientPlan, CoefficientSet, IndexParams, ResourceError,
                        memory_ceiling, plan_resources, shat, vhat)
from .wavelet import compute_cpsi, wavelet_from_name

log = logging.getLogger(__name__)

NCLT_BUDGET = 2**22       # fGn draws per path when inner_factor is chosen automatically
MAX_FAILED_SHARE = 0.01


class ReplicationError(RuntimeError):
    def __init__(self, rep_id, cause):
        super().__init__(f"replication {rep_id}: {cause}")
        self.rep_id = rep_id
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams
    index: IndexParams
    replications: int = 100
    seed: int = 0
    wavelet: str = "poly"
    wavelet_res: int = 12
    backend: str | None = None      # exact-fbm / nclt / chaos-grid; default by q
    R: int | None = None
    inner_factor: int | None = None
    k_replications: int = 0         # Monte Carlo K for q >= 2 (0: no sigma^2)
    level: float = 0.95

    def __post_init__(self):
        backend = self.backend or ("exact-fbm" if self.model.order == 1 else "nclt")
        if backend == "exact-fbm" and self.model.order != 1:
            raise ValueError("exact-fbm backend requires q = 1")
        if backend not in ("exact-fbm", "nclt", "chaos-grid"):
            raise ValueError(f"unknown backend {backend!r}")
        object.__setattr__(self, "backend", backend)
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.index.d < 2:
            raise ValueError("the estimator needs d >= 2")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")

    @property
    def quad_nodes(self):
        return 2**self.index.N if self.R is None else self.R

    def to_dict(self):
        out = asdict(self)
        out["R"] = self.quad_nodes
        return out


@dataclass(frozen=True, eq=False)
class _Context:
    spec: object
    cpsi: float
    plan: object
    coef_plan: object
    inner_factor: int


def _auto_inner(n):
    return max(1, min(64, NCLT_BUDGET // max(n, 1)))


@functools.lru_cache(maxsize=16)
def _context(config):
    index = config.index
    spec = wavelet_from_name(config.wavelet, config.wavelet_res)
    cpsi = compute_cpsi(spec, config.model.hurst).cpsi
    inner = 1
    if config.backend == "nclt":
        probe = plan_resources(index, config.quad_nodes, ceiling=2**62)
        inner = config.inner_factor or _auto_inner(probe.n)
    plan = plan_resources(index, config.quad_nodes, inner_factor=inner)
    if config.backend == "chaos-grid":
        need = 8 * U_NODES * plan.n * 4 * plan.n
        if need > plan.ceiling:
            raise ResourceError(f"chaos backend needs ~{need} bytes for n={plan.n}; "
                                f"ceiling {plan.ceiling}; deficit {need - plan.ceiling} bytes")
    coef_plan = CoefficientPlan(index, spec, config.quad_nodes, plan.step)
    return _Context(spec, cpsi, plan, coef_plan, inner)


def simulate_for(config, rep_id, n, step, inner=1):
    m = config.model
    if config.backend == "exact-fbm":
        return simulate_fbm_exact(m.hurst, n, step, config.seed, rep_id)
    if config.backend == "nclt":
        return simulate_hermite_nclt(m, n, inner, config.seed, step=step, rep_id=rep_id)
    return simulate_chaos_path(m, n, step, config.seed, rep_id=rep_id)


@dataclass(frozen=True)
class ReplicationResult:
    rep_id: int
    hhat: float
    vhat: tuple
    shat: tuple


def run_replication(config, rep_id, path=None):
    """One path -> (H_hat, V_hat per scale, S_hat per scale). V_hat uses the true H."""
    ctx = _context(config)
    try:
        if path is None:
            path = simulate_for(config, rep_id, ctx.plan.n, ctx.plan.step, ctx.inner_factor)
        values = ctx.coef_plan.apply(path.values)
        coeffs = CoefficientSet(config.index, config.quad_nodes, ctx.coef_plan.ells, values)
        d = config.index.d
        s = [shat(coeffs, M) for M in range(1, d + 1)]
        v = [vhat(coeffs, M, config.model.hurst, ctx.cpsi) for M in range(1, d + 1)]
        est = estimate_hurst(s, config.index.N, d)
    except (ValueError, ArithmeticError) as exc:
        raise ReplicationError(rep_id, exc) from exc
    if not math.isfinite(est.hhat):
        raise ReplicationError(rep_id, "non-finite estimate")
    return ReplicationResult(rep_id, est.hhat, tuple(v), tuple(s))


def ks_normality(samples, mean, variance):
    """Sup-distance between the empirical CDF of `samples` and N(mean, variance)."""
    if not variance > 0:
        raise ValueError("variance must be positive")
    x = np.asarray(samples, dtype=float)
    if x.size < 30:
        raise ValueError("need at least 30 samples")
    return float(stats.kstest(x, "norm", args=(mean, math.sqrt(variance))).statistic)


def coverage(hhat_samples, true_H, sigma2, card, level=0.95):
    """Share of |H_hat - H| <= z_level sqrt(sigma2 / card)."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if not sigma2 > 0 or card < 1:
        raise ValueError("need sigma2 > 0 and card >= 1")
    z = stats.norm.ppf(0.5 + level / 2)
    h = np.asarray(hhat_samples, dtype=float)
    return float(np.mean(np.abs(h - true_H) <= z * math.sqrt(sigma2 / card)))


@dataclass
class MonteCarloReport:
    config: dict
    rep_ids: list
    status: list
    hhat: np.ndarray
    vhat: np.ndarray
    shat: np.ndarray
    card: int
    sigma2: float | None
    k_provenance: str | None
    k_diagonal: float | None
    runtime: dict
    summary: dict = field(default_factory=dict)

    @property
    def standardized(self):
        return math.sqrt(self.card) * (self.config["model"]["hurst"] - self.hhat)

    def to_dict(self):
        return {
            "tool": "hermwave", "version": __version__,
            "config": self.config, "summary": self.summary, "runtime": self.runtime,
            "card": self.card, "sigma2": self.sigma2, "k_provenance": self.k_provenance,
            "replications": [
                {"rep_id": r, "seed": [self.config["seed"], r], "status": s} for r, s in zip(self.rep_ids, self.status)],
            "hhat": self.hhat.tolist(), "vhat": self.vhat.tolist(), "shat": self.shat.tolist(),
            "standardized_errors": (self.standardized / math.sqrt(self.sigma2)).tolist()
            if self.sigma2 else None,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def write_samples(self, filename):
        d = self.vhat.shape[1]
        ok = [r for r, s in zip(self.rep_ids, self.status) if s == "ok"]
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rep_id", "hhat"] + [f"vhat_M{M}" for M in range(1, d + 1)])
            for r, h, v in zip(ok, self.hhat, self.vhat):
                w.writerow([r, repr(float(h))] + [repr(float(x)) for x in v])


def _sigma2(config, spec):
    q, H, d = config.model.order, config.model.hurst, config.index.d
    if q == 1:
        K = kmatrix_analytic_q1(spec, H, d)
    elif config.k_replications:
        K = kmatrix_montecarlo(config.model, spec, d, config.k_replications, config.seed)
    else:
        return None, None, None
    return asymptotic_sigma2(K, d), K.provenance, float(K.matrix[0, 0])


def run_experiment(config, threads=1, rep_ids=None):
    """Run all replications and aggregate; deterministic in rep_id order."""
    ctx = _context(config)
    ids = list(range(config.replications)) if rep_ids is None else list(rep_ids)

    def one(r):
        try:
            return run_replication(config, r)
        except ReplicationError as exc:
            log.warning("%s", exc)
            return exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, ids))
    else:
        results = [one(r) for r in ids]

    failed = [r for r in results if isinstance(r, ReplicationError)]
    if len(failed) > MAX_FAILED_SHARE * len(ids):
        raise RuntimeError(f"{len(failed)} of {len(ids)} replications failed; first: {failed[0]}")
    good = [r for r in results if not isinstance(r, ReplicationError)]
    status = ["ok" if not isinstance(r, ReplicationError) else f"error: {r.cause}" for r in results]

    H = config.model.hurst
    hh = np.array([r.hhat for r in good])
    vv = np.array([r.vhat for r in good]).reshape(len(good), config.index.d)
    ss = np.array([r.shat for r in good]).reshape(len(good), config.index.d)
    sigma2, prov, kdiag = _sigma2(config, ctx.spec)
    card = config.index.card
    report = MonteCarloReport(
        config.to_dict(), ids, status, hh, vv, ss, card, sigma2, prov, kdiag,
        runtime={"path_points": ctx.plan.n + 1, "step": ctx.plan.step,
                 "inner_factor": ctx.inner_factor, "backend": config.backend,
                 "estimated_bytes": ctx.plan.bytes, "memory_ceiling": memory_ceiling()})
    summary = {"n_ok": len(good), "n_failed": len(failed)}
    if len(good):
        n_ok = len(good)
        summary.update(mean=float(hh.mean()), bias=float(hh.mean() - H),
                       bias_se=float(hh.std(ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else None,
                       rmse=float(np.sqrt(np.mean((hh - H) ** 2))),
                       sd=float(hh.std(ddof=1)) if len(good) > 1 else 0.0,
                       share_in_unit_interval=float(np.mean((hh > 0) & (hh < 1))))
    if len(good) >= 30:
        z = report.standardized
        summary["standardized_variance"] = float(z.var(ddof=1))
        if kdiag is not None:
            summary["ks_vhat"] = [ks_normality(vv[:, j], 0.0, kdiag) for j in range(vv.shape[1])]
        if sigma2:
            summary["ks_standardized"] = ks_normality(z, 0.0, sigma2)
            cov = coverage(hh, H, sigma2, card, config.level)
            summary["coverage"] = cov
            summary["coverage_se"] = math.sqrt(cov * (1 - cov) / len(good))
    report.summary = summary
    return report
