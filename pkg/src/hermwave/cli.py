"""Command-line entry point: hermwave <subcommand> ...

Exit codes: 0 success, 1 runtime error, 2 usage error, 3 validation error.
Errors are reported as one JSON line on stderr. Every run that writes a file
also writes ``<out>.manifest.json`` so the run can be replayed.
"""

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile

import numpy as np

from . import __version__
from .estimator import asymptotic_sigma2, estimate_hurst, kmatrix_analytic_q1, kmatrix_montecarlo
from .harness import ExperimentConfig, run_experiment
from .hermite_sim import (CLI_BACKENDS, ModelParams, read_path, simulate_chaos_path,
                          simulate_fbm_exact, simulate_hermite_nclt, write_path)
from .variation import (IndexParams, ResourceError, check_resolution, collect_coefficients,
                        memory_ceiling, plan_resources, variation_stats, write_coefficients_csv,
                        write_shat_csv)
from .wavelet import export_csv, wavelet_from_name

log = logging.getLogger("hermwave")

EXIT_RUNTIME, EXIT_USAGE, EXIT_VALIDATION = 1, 2, 3
AUTO_INNER_BUDGET = 2**22
# flags naming files a subcommand writes; replay redirects and compares them
OUTPUT_FLAGS = ("out", "shat_out", "emit_samples")


class UsageError(Exception):
    pass


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_index(p, required=True):
    p.add_argument("--N", type=int, required=required)
    p.add_argument("--beta", type=float, required=required)
    p.add_argument("--gamma", type=float, required=required)
    p.add_argument("--d", type=int, default=3)


def _add_model(p):
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--hurst", type=float, required=True)


def _common_flags(top_level):
    # Subcommand copies suppress their defaults so a flag given before the
    # subcommand name is not overwritten by the subparser's default.
    def default(value):
        return value if top_level else argparse.SUPPRESS

    common = _Parser(add_help=False)
    common.add_argument("--wavelet", default=default("poly"), help="poly, haar or db<order>")
    common.add_argument("--wavelet-res", type=int, default=default(12),
                        help="log2 of the tabulation resolution")
    common.add_argument("--threads", type=int, default=default(1))
    common.add_argument("-v", "--verbose", action="count", default=default(0))
    return common


def build_parser():
    common = _common_flags(top_level=False)
    parser = _Parser(prog="hermwave", description=__doc__.splitlines()[0],
                     parents=[_common_flags(top_level=True)])
    parser.add_argument("--version", action="version", version=f"hermwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="simulate one path")
    _add_model(p)
    p.add_argument("--backend", choices=sorted(CLI_BACKENDS), default=None)
    p.add_argument("--n", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rep-id", type=int, default=0)
    p.add_argument("--inner-factor", type=int, default=None)
    p.add_argument("--out")
    _add_index(p, required=False)
    p.add_argument("--R", type=int)

    p = sub.add_parser("coeffs", parents=[common], help="discrete wavelet coefficients of a path")
    p.add_argument("--input", required=True)
    _add_index(p)
    p.add_argument("--R", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--shat-out")

    p = sub.add_parser("estimate", parents=[common], help="estimate H from a path")
    p.add_argument("--input", required=True)
    _add_index(p)
    p.add_argument("--R", type=int)
    p.add_argument("--with-sigma2", action="store_true")
    p.add_argument("--k-reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("kmatrix", parents=[common], help="covariance matrix of normalized squares")
    _add_model(p)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=["montecarlo", "analytic"], default="montecarlo")
    p.add_argument("--out")

    p = sub.add_parser("validate", parents=[common], help="Monte Carlo validation run")
    _add_model(p)
    _add_index(p)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=sorted(CLI_BACKENDS), default=None)
    p.add_argument("--R", type=int)
    p.add_argument("--inner-factor", type=int, default=None)
    p.add_argument("--k-reps", type=int, default=0)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out")
    p.add_argument("--emit-samples")

    p = sub.add_parser("wavelet", parents=[common], help="export the tabulated wavelet as CSV")
    p.add_argument("--out", required=True)

    p = sub.add_parser("replay", parents=[common], help="re-run a manifest and compare outputs")
    p.add_argument("manifest")
    return parser


# ---- helpers

def _index(a):
    try:
        return IndexParams(a.N, a.beta, a.gamma, a.d)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _model(a):
    try:
        return ModelParams(a.q, a.hurst)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _wavelet(a):
    try:
        return wavelet_from_name(a.wavelet, a.wavelet_res)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _dump_json(obj, out):
    text = json.dumps(obj, sort_keys=True, indent=1) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _sha256(filename):
    h = hashlib.sha256()
    with open(filename, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(args, argv):
    outputs = {f: getattr(args, f) for f in OUTPUT_FLAGS if getattr(args, f, None)}
    if "out" not in outputs:
        return None
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}
    manifest = {
        "tool": "hermwave", "version": __version__, "subcommand": args.command,
        "argv": list(argv), "cwd": os.getcwd(), "params": params,
        "outputs": {f: {"path": p, "sha256": _sha256(p)} for f, p in outputs.items()},
    }
    name = outputs["out"] + ".manifest.json"
    with open(name, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return name


# ---- subcommands

def cmd_simulate(a):
    model = _model(a)
    backend = CLI_BACKENDS[a.backend or ("fbm" if model.order == 1 else "nclt")]
    if backend == "exact-fbm" and model.order != 1:
        raise ValidationError("backend fbm requires --q 1")
    if a.N is not None:
        index = _index(a)
        plan = plan_resources(index, a.R)
        print(json.dumps({"plan": {"n": plan.n, "step": plan.step, "horizon": plan.horizon,
                                   "bytes": plan.bytes}}, sort_keys=True))
        n = a.n if a.n is not None else plan.n
        step = a.step if a.step is not None else plan.step
        if step > plan.step * (1 + 1e-12) or n * step < plan.horizon * (1 - 1e-12):
            log.warning("path (n=%d, step=%r) does not cover the plan (n=%d, step=%r)",
                        n, step, plan.n, plan.step)
    else:
        if a.n is None:
            raise ValidationError("--n is required unless --N/--beta/--gamma are given")
        n = a.n
        step = a.step if a.step is not None else 1.0 / n
    if n < 1 or not step > 0:
        raise ValidationError("need --n >= 1 and --step > 0")
    if a.out is None:
        return 0
    if backend == "exact-fbm":
        path = simulate_fbm_exact(model.hurst, n, step, a.seed, a.rep_id)
    elif backend == "nclt":
        inner = a.inner_factor or max(1, min(64, AUTO_INNER_BUDGET // n))
        plan_bytes = 8 * (n + 1) + 64 * n * inner
        if plan_bytes > memory_ceiling():
            raise ResourceError(f"simulation needs {plan_bytes} bytes; deficit "
                                f"{plan_bytes - memory_ceiling()} bytes")
        path = simulate_hermite_nclt(model, n, inner, a.seed, step=step, rep_id=a.rep_id)
    else:
        path = simulate_chaos_path(model, n, step, a.seed, rep_id=a.rep_id)
    write_path(path, a.out)
    return 0


def _load(a, index):
    path = read_path(a.input)
    check_resolution(path.step, index, a.R)
    return path


def cmd_coeffs(a):
    index, spec = _index(a), _wavelet(a)
    path = _load(a, index)
    coeffs = collect_coefficients(path, spec, index, a.R)
    write_coefficients_csv(coeffs, a.out)
    if a.shat_out:
        write_shat_csv(variation_stats(coeffs), a.shat_out)
    return 0


def cmd_estimate(a):
    index, spec = _index(a), _wavelet(a)
    if index.d < 2:
        raise ValidationError("the estimator needs d >= 2")
    path = _load(a, index)
    stats = variation_stats(collect_coefficients(path, spec, index, a.R))
    est = estimate_hurst(stats.shat, index.N, index.d)
    out = {"hhat": est.hhat, "shat": list(est.shat), "N": index.N, "beta": index.beta,
           "gamma": index.gamma, "d": index.d, "wavelet": spec.name}
    if a.with_sigma2:
        params = path.params
        if params.order == 1:
            K = kmatrix_analytic_q1(spec, params.hurst, index.d)
        else:
            K = kmatrix_montecarlo(params, spec, index.d, a.k_reps, a.seed)
        out["sigma2"] = asymptotic_sigma2(K, index.d)
        out["k_provenance"] = K.provenance
    _dump_json(out, a.out)
    return 0


def cmd_kmatrix(a):
    model, spec = _model(a), _wavelet(a)
    if a.d < 2:
        raise ValidationError("the estimator needs d >= 2")
    if a.method == "analytic":
        if model.order != 1:
            raise ValidationError("analytic K is available for q = 1 only")
        K = kmatrix_analytic_q1(spec, model.hurst, a.d)
    else:
        if a.reps < 1000:
            raise ValidationError("--reps must be >= 1000")
        K = kmatrix_montecarlo(model, spec, a.d, a.reps, a.seed)
    out = K.to_dict()
    out.update(q=model.order, hurst=model.hurst, d=a.d, wavelet=spec.name,
               sigma2=asymptotic_sigma2(K, a.d))
    _dump_json(out, a.out)
    return 0


def cmd_validate(a):
    model, index = _model(a), _index(a)
    _wavelet(a)
    backend = CLI_BACKENDS[a.backend] if a.backend else None
    try:
        config = ExperimentConfig(model, index, a.reps, a.seed, a.wavelet, a.wavelet_res,
                                  backend, a.R, a.inner_factor, a.k_reps, a.level)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    report = run_experiment(config, threads=max(1, a.threads))
    out = report.to_dict()
    _dump_json(out, a.out)
    if a.emit_samples:
        report.write_samples(a.emit_samples)
    return 0


def cmd_wavelet(a):
    export_csv(_wavelet(a), a.out)
    return 0


def cmd_replay(a):
    with open(a.manifest) as fh:
        manifest = json.load(fh)
    recorded = manifest["outputs"]
    tmp = tempfile.mkdtemp(prefix="hermwave-replay-")
    here = os.getcwd()
    try:
        os.chdir(manifest.get("cwd", here))
        argv = list(manifest["argv"])
        for flag, info in recorded.items():
            option = "--" + flag.replace("_", "-")
            i = argv.index(option)
            argv[i + 1] = os.path.join(tmp, flag + "_" + os.path.basename(info["path"]))
        args = build_parser().parse_args(argv)
        status = DISPATCH[args.command](args)
        if status:
            return status
        result = {}
        for flag, info in recorded.items():
            fresh = getattr(args, flag)
            result[flag] = _sha256(fresh) == info["sha256"]
    finally:
        os.chdir(here)
        shutil.rmtree(tmp, ignore_errors=True)
    ok = all(result.values())
    print(json.dumps({"replay": "identical" if ok else "differs", "outputs": result},
                     sort_keys=True))
    return 0 if ok else EXIT_RUNTIME


DISPATCH = {"simulate": cmd_simulate, "coeffs": cmd_coeffs, "estimate": cmd_estimate,
            "kmatrix": cmd_kmatrix, "validate": cmd_validate, "wavelet": cmd_wavelet,
            "replay": cmd_replay}


def _fail(code, kind, exc):
    msg = " ".join(str(exc).split())
    sys.stderr.write(json.dumps({"error": kind, "exit": code, "message": msg}) + "\n")
    return code


def parse_and_dispatch(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        status = DISPATCH[args.command](args)
        if status == 0 and args.command != "replay":
            write_manifest(args, argv)
        return status
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, "validation", exc)
    except Exception as exc:  # noqa: BLE001 - every failure leaves as one JSON line
        log.debug("runtime failure", exc_info=True)
        return _fail(EXIT_RUNTIME, type(exc).__name__, exc)


def main():
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
