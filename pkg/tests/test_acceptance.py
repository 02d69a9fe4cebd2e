"""The ten acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary. Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import integrate

from conftest import record_criterion
from hermwave.estimator import (estimate_hurst, kmatrix_analytic_q1,
                                kmatrix_montecarlo)
from hermwave.harness import ExperimentConfig, ks_normality, run_experiment
from hermwave.hermite_sim import (ModelParams, build_grid, decompose_coefficient_batch,
                                  simulate_fbm_exact)
from hermwave.variation import (CoefficientPlan, IndexParams, collect_coefficients,
                                discretization_residuals, expected_square, plan_resources)
from hermwave.wavelet import compute_cpsi, eval_wavelet, haar, polynomial_bump


def independent_cpsi(spec, H):
    """QUADPACK route through the autocorrelation R(s) = int psi(x) psi(x+s) dx."""
    f = lambda x: eval_wavelet(spec, x)
    R = lambda s: integrate.quad(lambda x: f(x) * f(x + s), 0, 1 - s, epsabs=1e-14,
                                 epsrel=1e-13, limit=200)[0]
    val, _ = integrate.quad(R, 0, 1, weight="alg", wvar=(2 * H, 0), epsabs=1e-14,
                            epsrel=1e-12, limit=200)
    return -val


def test_criterion_01_exact_recovery():
    start = time.perf_counter()
    worst = 0.0
    for H in np.round(np.arange(0.55, 0.951, 0.05), 2):
        for d in (2, 3, 4, 5):
            shat = [0.37 * (M * 2.0**12) ** (-(2 * H + 1)) for M in range(1, d + 1)]
            worst = max(worst, abs(estimate_hurst(shat, 12, d).hhat - H))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and elapsed < 1.0
    record_criterion(1, ok, f"max |Hhat-H| = {worst:.2e} (< 1e-10), {elapsed:.3f} s (< 1 s)")
    assert ok


def test_criterion_02_wavelet_constant():
    start = time.perf_counter()
    haar_err = abs(compute_cpsi(haar(), 0.5).cpsi - 1 / 12)
    dual = {H: abs(compute_cpsi(polynomial_bump(), H).cpsi - independent_cpsi(polynomial_bump(), H))
            for H in (0.6, 0.75, 0.9)}
    elapsed = time.perf_counter() - start
    ok = haar_err < 1e-10 and max(dual.values()) < 1e-8 and elapsed < 10
    record_criterion(2, ok, f"|C_haar(0.5)-1/12| = {haar_err:.1e}; dual-scheme max diff "
                            f"{max(dual.values()):.1e} (< 1e-8); {elapsed:.1f} s")
    assert ok


def test_criterion_03_coefficient_variance():
    H, N, reps = 0.7, 10, 2000
    index = IndexParams(N, 0.6, 0.55, 2)
    spec = polynomial_bump()
    cpsi = compute_cpsi(spec, H).cpsi
    plan = plan_resources(index)
    cp = CoefficientPlan(index, spec, 2**N, plan.step)
    vals = np.array([cp.apply(simulate_fbm_exact(H, plan.n, plan.step, 31, r).values)
                     for r in range(reps)])
    details, ok = [], True
    for M in (1, 2):
        target = expected_square(M, N, H, cpsi)
        per_ell = vals[:, M - 1, :].var(axis=0, ddof=1) / target
        ok &= bool(np.all(np.abs(per_ell - 1) < 0.10))
        details.append(f"M={M}: Var/target in [{per_ell.min():.3f}, {per_ell.max():.3f}]")
    record_criterion(3, ok, "; ".join(details) + " (within 10% for every ell)")
    assert ok


def test_criterion_04_variation_clt(q1_clt_n8, q1_clt_n12):
    ks12 = ks_normality(q1_clt_n12.vhat[:, 0], 0.0, 2.0)
    ks8 = ks_normality(q1_clt_n8.vhat[:, 0], 0.0, 2.0)
    ok = ks12 <= 0.10 and ks12 <= ks8
    record_criterion(4, ok, f"KS(V_hat_1, N(0,2)) at N=12 = {ks12:.4f} (<= 0.10), "
                            f"at N=8 = {ks8:.4f} (N=12 must not exceed N=8)")
    assert ok


def test_criterion_05_estimator_clt(q1_clt_n12):
    rep = q1_clt_n12
    sigma2 = rep.sigma2
    emp = float(np.var(rep.standardized, ddof=1))
    cov = rep.summary["coverage"]
    ok = sigma2 / 2 <= emp <= 2 * sigma2 and 0.85 <= cov <= 0.99
    record_criterion(5, ok, f"Var(sqrt|L|(H-Hhat)) = {emp:.4f} vs sigma^2 = {sigma2:.4f} "
                            f"(factor 2); coverage = {cov:.3f} in [0.85, 0.99]")
    assert ok


def _bias_pair(q, H):
    out = {}
    for N in (8, 12):
        cfg = ExperimentConfig(ModelParams(q, H), IndexParams(N, 0.6, 0.55, 3), 300, 7100)
        rep = run_experiment(cfg)
        out[N] = (rep.summary["bias"], rep.summary["bias_se"])
    return out


@pytest.mark.parametrize("q,H", [(1, 0.6), (1, 0.75), (1, 0.9), (2, 0.6), (2, 0.75), (2, 0.9)])
def test_criterion_06_consistency_trend(q, H):
    b = _bias_pair(q, H)
    ok = abs(b[12][0]) < abs(b[8][0])
    record_criterion(6, ok, f"q={q} H={H}: |bias| N=8 {abs(b[8][0]):.4f} (se {b[8][1]:.4f}), "
                            f"N=12 {abs(b[12][0]):.4f} (se {b[12][1]:.4f})")
    assert ok


def test_criterion_07_kmatrix_cross_validation():
    spec = polynomial_bump()
    analytic = kmatrix_analytic_q1(spec, 0.7, 3)
    mc = kmatrix_montecarlo(ModelParams(1, 0.7), spec, 3, 10_000, seed=707)
    z = np.abs(mc.matrix - analytic.matrix) / mc.stderr
    diag = np.diag(mc.matrix)
    ok = bool(np.all(z <= 3) and np.all(np.abs(diag - 2) <= 0.2))
    record_criterion(7, ok, f"max |K_mc - K_analytic| / se = {z.max():.2f} (<= 3); "
                            f"diagonal {diag[0]:.3f} (2 +/- 0.2)")
    assert ok


def test_criterion_08_check_part_negligibility():
    p = ModelParams(2, 0.7)
    grid = build_grid(1.0, 1024, 15.0, params=p)
    spec = polynomial_bump()
    kappa = (2 - 2 * p.hurst) / p.order
    scaled, se, worst_sum = [], [], 0.0
    for M in (1, 2, 4, 8):
        parts = decompose_coefficient_batch(p, grid, spec, 1.0, 0, M, seed=808, reps=2000)
        worst_sum = max(worst_sum, float(np.max(np.abs(parts.tilde + parts.check - parts.total))))
        sq = parts.check**2 * (M + 1) ** kappa
        scaled.append(sq.mean())
        se.append(sq.std(ddof=1) / math.sqrt(sq.size))
    monotone = all(scaled[i + 1] <= scaled[i] + 2 * math.hypot(se[i], se[i + 1])
                   for i in range(3))
    ok = monotone and worst_sum <= 1e-10
    record_criterion(8, ok, "E[check^2](M+1)^kappa = " + ", ".join(
        f"{v:.4f}+/-{s:.4f}" for v, s in zip(scaled, se))
        + f" (non-increasing within 2 se); max |tilde+check-total| = {worst_sum:.1e}")
    assert ok


def test_criterion_09_discretization_decay():
    H, reps = 0.7, 500
    spec = polynomial_bump()
    cpsi = compute_cpsi(spec, H).cpsi
    mean_t2 = {}
    for N in (8, 10):
        index = IndexParams(N, 0.6, 0.55, 2)
        fine = 4 * 2**N
        plan = plan_resources(index, R=fine)
        t2 = []
        for r in range(reps):
            path = simulate_fbm_exact(H, plan.n, plan.step, 909, r)
            coeffs = collect_coefficients(path, spec, index, R=2**N, R_fine=fine)
            t2.append(np.mean(discretization_residuals(coeffs, H, cpsi) ** 2))
        mean_t2[N] = float(np.mean(t2))
    ratio = mean_t2[8] / mean_t2[10]
    ok = ratio >= 2
    record_criterion(9, ok, f"E[t^2] N=8 {mean_t2[8]:.3e}, N=10 {mean_t2[10]:.3e}, "
                            f"ratio {ratio:.2f} (>= 2)")
    assert ok


def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "hermwave.cli", *args], cwd=cwd,
                          capture_output=True, text=True)


def test_criterion_10_reproducibility(tmp_path):
    start = time.perf_counter()
    idx = ["--N", "8", "--beta", "0.6", "--gamma", "0.55", "--d", "3"]
    runs = [
        ["simulate", "--q", "1", "--hurst", "0.7", *idx, "--seed", "1", "--out", "fbm.bin"],
        ["simulate", "--q", "2", "--hurst", "0.7", "--backend", "nclt", "--n", "4096",
         "--seed", "2", "--out", "nclt.bin"],
        ["simulate", "--q", "2", "--hurst", "0.7", "--backend", "chaos", "--n", "64",
         "--seed", "3", "--out", "chaos.bin"],
        ["coeffs", "--input", "fbm.bin", *idx, "--out", "coeffs.csv", "--shat-out", "shat.csv"],
        ["estimate", "--input", "fbm.bin", *idx, "--with-sigma2", "--out", "est.json"],
        ["kmatrix", "--q", "1", "--hurst", "0.7", "--d", "3", "--reps", "1000", "--seed", "4",
         "--out", "k.json"],
        ["validate", "--q", "1", "--hurst", "0.7", *idx, "--reps", "40", "--seed", "5",
         "--out", "report.json", "--emit-samples", "samples.csv"],
        ["--wavelet", "db3", "wavelet", "--out", "db3.csv"],
    ]
    failures = []
    for argv in runs:
        res = _cli(*argv, cwd=tmp_path)
        if res.returncode != 0:
            failures.append(f"{argv[0]} exit {res.returncode}: {res.stderr.strip()}")
            continue
        out = argv[argv.index("--out") + 1]
        replay = _cli("replay", os.path.join(tmp_path, out + ".manifest.json"), cwd=tmp_path)
        if replay.returncode != 0 or '"identical"' not in replay.stdout:
            failures.append(f"replay of {out}: {replay.stdout.strip()} {replay.stderr.strip()}")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60
    record_criterion(10, ok, f"{len(runs) - len(failures)}/{len(runs)} CLI runs replay "
                             f"byte-identically; {elapsed:.1f} s (< 60 s)"
                     + ("; " + " | ".join(failures) if failures else ""))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
