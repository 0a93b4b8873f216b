"""Command-line interface.

Subcommands: ``solve`` (fit one estimator on matrices from disk),
``simulate`` (write a synthetic instance), ``bench`` (ROC/AUC benchmark or
the covariance Monte-Carlo study), and ``replay`` (re-run a recorded
manifest).  Exit codes: 0 converged / completed, 1 error, 2 stopped at the
iteration cap.  ``CLAR_THREADS`` caps the worker pool used across seeds and
estimators (default 1: fully sequential, bit-reproducible).
"""

import argparse
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bench import GridSpec, _worker_cap, roc_sweep
from .exceptions import ClarError, InvalidInput
from .io import (extension_for, read_manifest, read_matrix,
                 read_observations, write_manifest, write_matrix,
                 write_observations, write_table)
from .model import (CoStdMatrix, SolverConfig, default_sigma_min,
                    preprocess_rescale)
from .simulate import SimConfig, covariance_study, generate, toeplitz_corr
from .solvers import ESTIMATOR_NAMES, EstimatorKind, lambda_max_for, solve

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ITER_CAP = 2


class UsageError(InvalidInput):
    """Bad command line; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _versions():
    import scipy
    import sklearn
    return {
        "clar_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "sklearn_version": sklearn.__version__,
        "python_version": ".".join(str(v) for v in sys.version_info[:3]),
    }


def _g17(value):
    return format(float(value), ".17g")


def _add_sim_flags(parser):
    parser.add_argument("--n", type=int, default=150)
    parser.add_argument("--p", type=int, default=500)
    parser.add_argument("--q", type=int, default=100)
    parser.add_argument("--r", type=int, default=20)
    parser.add_argument("--rho-x", type=float, default=0.6)
    parser.add_argument("--rho-s", type=float, default=0.4)
    parser.add_argument("--nnz-rows", type=int, default=30)
    parser.add_argument("--snr", type=float, default=0.03,
                        help="target SNR; 'inf' produces noiseless data")
    parser.add_argument("--seed", type=int, default=0)


def _add_solver_flags(parser):
    parser.add_argument("--sigma-min", type=float, default=None,
                        help="spectral floor; default ||Ybar||/(1000 n q)")
    parser.add_argument("--mu", type=float, default=None,
                        help="graphical-lasso penalty (mrcer only)")
    parser.add_argument("--gap-tol", type=float, default=1e-6)
    parser.add_argument("--max-sweeps", type=int, default=10000)
    parser.add_argument("--f-sigma", type=int, default=10,
                        help="coefficient sweeps per noise update")


def build_parser():
    parser = _Parser(prog="clar",
                     description="Sparse multitask regression with "
                                 "correlated-noise estimation from repeated "
                                 "measurements.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="fit one estimator on saved matrices")
    sp.add_argument("--estimator", required=True, choices=ESTIMATOR_NAMES)
    sp.add_argument("--x", required=True, help="design matrix file")
    sp.add_argument("--y", required=True,
                    help="observation prefix (reads <y>_rep0.csv, ...) or a "
                         "single-file path")
    lam_group = sp.add_mutually_exclusive_group(required=True)
    lam_group.add_argument("--lambda", dest="lam", type=float)
    lam_group.add_argument("--lambda-frac", type=float,
                           help="penalty as a fraction of lambda_max")
    _add_solver_flags(sp)
    sp.add_argument("--preprocess", action="store_true",
                    help="apply row/column rescaling before solving")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_solve)

    sg = sub.add_parser("simulate", help="write one synthetic instance")
    _add_sim_flags(sg)
    sg.add_argument("--format", choices=("csv", "packed-binary"),
                    default="csv")
    sg.add_argument("--out", required=True)
    sg.set_defaults(func=cmd_simulate)

    sb = sub.add_parser("bench", help="ROC/AUC benchmark over seeds")
    sb.add_argument("--estimators", default="clar,sgcl,mtl",
                    help="comma-separated list")
    sb.add_argument("--grid-points", type=int, default=160)
    sb.add_argument("--seeds", type=int, default=10)
    sb.add_argument("--lambda-min-ratio", type=float, default=1e-3)
    sb.add_argument("--fpr-target", type=float, default=0.4)
    sb.add_argument("--adaptive", action="store_true",
                    help="stop each sweep once FPR exceeds --fpr-target")
    _add_sim_flags(sb)
    _add_solver_flags(sb)
    sb.add_argument("--covariance-study", action="store_true",
                    help="run the residual-covariance Monte Carlo instead")
    sb.add_argument("--trials", type=int, default=10000,
                    help="Monte-Carlo trials for --covariance-study")
    sb.add_argument("--out", required=True)
    sb.set_defaults(func=cmd_bench)

    sr = sub.add_parser("replay", help="re-run a recorded manifest")
    sr.add_argument("manifest")
    sr.add_argument("--out", default=None,
                    help="output directory override")
    sr.set_defaults(func=cmd_replay)
    return parser


def _out_dir(raw):
    out = Path(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args):
    out = _out_dir(args.out)
    x = read_matrix(args.x)
    obs = read_observations(args.y)
    if args.preprocess:
        x, obs = preprocess_rescale(x, obs)
    kind = EstimatorKind(args.estimator, args.mu)
    sigma_min = args.sigma_min if args.sigma_min is not None \
        else default_sigma_min(obs)
    if args.lam is not None:
        lam = float(args.lam)
    else:
        lam = args.lambda_frac * lambda_max_for(kind, obs, x,
                                                sigma_min=sigma_min)
    config = SolverConfig(lam=lam, sigma_min=sigma_min,
                          s_update_freq=args.f_sigma,
                          max_iters=args.max_sweeps, gap_tol=args.gap_tol)
    result = solve(kind, obs, x, config)

    write_matrix(out / "beta.csv", result.beta.beta, "csv")
    noise = result.noise
    if noise is None:
        noise_matrix = np.eye(obs.n)  # homoscedastic solver: implicit metric
    elif isinstance(noise, CoStdMatrix):
        noise_matrix = noise.matrix
    else:
        noise_matrix = np.asarray(noise, dtype=float)
    write_matrix(out / "noise.csv", noise_matrix, "csv")

    gap_by_sweep = {}
    for k, gap in enumerate(result.gap_trace):
        sweep = k * args.f_sigma
        if sweep <= result.iterations:
            gap_by_sweep[sweep] = gap
    rows = [(sweep, float(obj), _g17(gap_by_sweep[sweep])
             if sweep in gap_by_sweep else "")
            for sweep, obj in enumerate(result.objective_trace)]
    write_table(out / "trace.csv", ("sweep", "objective", "gap"), rows)

    entries = {
        "command": "solve",
        "estimator": args.estimator,
        "x": str(Path(args.x).resolve()),
        "y": str(Path(args.y).resolve()),
        "lambda": _g17(lam),
        "sigma_min": _g17(sigma_min),
        "gap_tol": _g17(args.gap_tol),
        "max_sweeps": str(args.max_sweeps),
        "f_sigma": str(args.f_sigma),
        "preprocess": "1" if args.preprocess else "0",
        "clar_threads": str(_worker_cap()),
        "out": str(out.resolve()),
    }
    if args.mu is not None:
        entries["mu"] = _g17(args.mu)
    entries.update(_versions())
    write_manifest(out / "manifest.txt", entries)

    print(f"estimator={args.estimator} lambda={_g17(lam)} "
          f"sweeps={result.iterations} converged={result.converged} "
          f"objective={_g17(result.objective_trace[-1])}")
    return EXIT_OK if result.converged else EXIT_ITER_CAP


def _sim_config_from(args):
    return SimConfig(n=args.n, p=args.p, q=args.q, r=args.r,
                     rho_x=args.rho_x, rho_s=args.rho_s,
                     n_nonzero_rows=args.nnz_rows, target_snr=args.snr,
                     seed=args.seed)


def _sim_manifest_entries(config):
    return {
        "n": str(config.n), "p": str(config.p), "q": str(config.q),
        "r": str(config.r), "rho_x": _g17(config.rho_x),
        "rho_s": _g17(config.rho_s),
        "nnz_rows": str(config.n_nonzero_rows),
        "snr": _g17(config.target_snr), "seed": str(config.seed),
    }


def cmd_simulate(args):
    out = _out_dir(args.out)
    config = _sim_config_from(args)
    instance = generate(config)
    ext = extension_for(args.format)
    write_matrix(out / f"X{ext}", instance.x.matrix, args.format)
    write_matrix(out / f"beta_star{ext}", instance.beta_star.beta,
                 args.format)
    write_matrix(out / f"s_star{ext}", instance.s_star.matrix, args.format)
    write_observations(out / "Y", instance.obs, args.format)

    entries = {"command": "simulate", "format": args.format,
               **_sim_manifest_entries(config),
               "achieved_snr": _g17(instance.achieved_snr),
               "out": str(out.resolve())}
    entries.update(_versions())
    write_manifest(out / "manifest.txt", entries)
    print(f"wrote instance to {out} (achieved SNR "
          f"{_g17(instance.achieved_snr)})")
    return EXIT_OK


def cmd_bench(args):
    out = _out_dir(args.out)
    base = _sim_config_from(args)

    if args.covariance_study:
        s_star = toeplitz_corr(args.n, args.rho_s)
        ratios = covariance_study(args.n, args.q, args.r, s_star,
                                  args.trials, args.seed)
        write_table(out / "ratios.csv",
                    ("mean_ratio_clar", "mean_ratio_sgcl", "variance_ratio"),
                    [tuple(float(v) for v in ratios)])
        entries = {"command": "bench", "covariance_study": "1",
                   "trials": str(args.trials),
                   **_sim_manifest_entries(base),
                   "out": str(out.resolve())}
        entries.update(_versions())
        write_manifest(out / "manifest.txt", entries)
        print(f"variance ratio {ratios[2]:.3f} (mean bias "
              f"{ratios[0]:.4f} / {ratios[1]:.4f})")
        return EXIT_OK

    names = [name.strip() for name in args.estimators.split(",")
             if name.strip()]
    if not names:
        raise UsageError("--estimators must name at least one estimator")
    kinds = [EstimatorKind(name, args.mu if name == "mrcer" else None)
             for name in names]
    grid = GridSpec(n_points=args.grid_points,
                    lambda_min_ratio=args.lambda_min_ratio,
                    fpr_target=args.fpr_target, adaptive=args.adaptive)
    config = SolverConfig(lam=1.0, sigma_min=args.sigma_min,
                          s_update_freq=args.f_sigma,
                          max_iters=args.max_sweeps, gap_tol=args.gap_tol)

    def _run_seed(k):
        instance = generate(replace(base, seed=base.seed + k))
        reports = []
        for kind in kinds:
            failures = []
            start = time.perf_counter()
            curve = roc_sweep(instance, kind, grid, config,
                              failures=failures)
            reports.append((kind.name, curve,
                            time.perf_counter() - start, failures))
        return reports

    cap = min(_worker_cap(), max(1, args.seeds))
    if cap > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=cap) as pool:
            per_seed = list(pool.map(_run_seed, range(args.seeds)))
    else:
        per_seed = [_run_seed(k) for k in range(args.seeds)]

    roc_rows, auc_rows, timing_rows, failure_rows = [], [], [], []
    for k, reports in enumerate(per_seed):
        seed = base.seed + k
        for name, curve, wall, failures in reports:
            for fpr, tpr, lam in curve.points:
                roc_rows.append((name, seed, float(lam), float(fpr),
                                 float(tpr)))
            auc_rows.append((name, seed, float(curve.auc)))
            timing_rows.append((name, seed, float(wall)))
            for lam, message in failures:
                clean = message.replace(",", ";").replace("\n", " ")
                failure_rows.append((name, seed, float(lam), clean))

    write_table(out / "roc.csv",
                ("estimator", "seed", "lambda", "fpr", "tpr"), roc_rows)
    write_table(out / "auc.csv", ("estimator", "seed", "auc"), auc_rows)
    write_table(out / "timing.csv", ("estimator", "seed", "seconds"),
                timing_rows)
    write_table(out / "failures.csv",
                ("estimator", "seed", "lambda", "message"), failure_rows)

    entries = {"command": "bench", "covariance_study": "0",
               "estimators": ",".join(names),
               "grid_points": str(args.grid_points),
               "seeds": str(args.seeds),
               "lambda_min_ratio": _g17(args.lambda_min_ratio),
               "fpr_target": _g17(args.fpr_target),
               "adaptive": "1" if args.adaptive else "0",
               **_sim_manifest_entries(base),
               "gap_tol": _g17(args.gap_tol),
               "max_sweeps": str(args.max_sweeps),
               "f_sigma": str(args.f_sigma),
               "clar_threads": str(_worker_cap()),
               "out": str(out.resolve())}
    if args.sigma_min is not None:
        entries["sigma_min"] = _g17(args.sigma_min)
    if args.mu is not None:
        entries["mu"] = _g17(args.mu)
    entries.update(_versions())
    write_manifest(out / "manifest.txt", entries)

    if roc_rows:
        for name in names:
            aucs = [row[2] for row in auc_rows if row[0] == name]
            print(f"{name}: median AUC {np.median(aucs):.4f} over "
                  f"{len(aucs)} seeds")
        return EXIT_OK
    print("all grid points failed", file=sys.stderr)
    return EXIT_ERROR


def cmd_replay(args):
    manifest = read_manifest(args.manifest)
    command = manifest.require("command")
    out = args.out if args.out is not None else manifest.require("out")
    if command == "solve":
        argv = ["solve", "--estimator", manifest.require("estimator"),
                "--x", manifest.require("x"), "--y", manifest.require("y"),
                "--lambda", manifest.require("lambda"),
                "--sigma-min", manifest.require("sigma_min"),
                "--gap-tol", manifest.require("gap_tol"),
                "--max-sweeps", manifest.require("max_sweeps"),
                "--f-sigma", manifest.require("f_sigma"),
                "--out", str(out)]
        if manifest.get("mu") is not None:
            argv += ["--mu", manifest.require("mu")]
        if manifest.get("preprocess") == "1":
            argv.append("--preprocess")
    elif command == "simulate":
        argv = ["simulate", "--out", str(out),
                "--format", manifest.get("format", "csv")]
        argv += _sim_argv_from(manifest)
    elif command == "bench":
        if manifest.get("covariance_study") == "1":
            argv = ["bench", "--covariance-study",
                    "--trials", manifest.require("trials"),
                    "--out", str(out)]
            argv += _sim_argv_from(manifest)
        else:
            argv = ["bench", "--estimators", manifest.require("estimators"),
                    "--grid-points", manifest.require("grid_points"),
                    "--seeds", manifest.require("seeds"),
                    "--lambda-min-ratio",
                    manifest.require("lambda_min_ratio"),
                    "--fpr-target", manifest.require("fpr_target"),
                    "--gap-tol", manifest.require("gap_tol"),
                    "--max-sweeps", manifest.require("max_sweeps"),
                    "--f-sigma", manifest.require("f_sigma"),
                    "--out", str(out)]
            if manifest.get("adaptive") == "1":
                argv.append("--adaptive")
            if manifest.get("sigma_min") is not None:
                argv += ["--sigma-min", manifest.require("sigma_min")]
            if manifest.get("mu") is not None:
                argv += ["--mu", manifest.require("mu")]
            argv += _sim_argv_from(manifest)
    else:
        raise InvalidInput(f"manifest command {command!r} cannot be "
                           f"replayed")
    parser = build_parser()
    replay_args = parser.parse_args(argv)
    return replay_args.func(replay_args)


def _sim_argv_from(manifest):
    return ["--n", manifest.require("n"), "--p", manifest.require("p"),
            "--q", manifest.require("q"), "--r", manifest.require("r"),
            "--rho-x", manifest.require("rho_x"),
            "--rho-s", manifest.require("rho_s"),
            "--nnz-rows", manifest.require("nnz_rows"),
            "--snr", manifest.require("snr"),
            "--seed", manifest.require("seed")]


def main(argv=None):
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"clar: usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ClarError as exc:
        print(f"clar: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"clar: i/o error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
