# Command-line pipeline: simulate -> solve -> evidence -> summarize, plus a
# scaling benchmark.  Exit codes: 0 ok, 2 config, 3 I/O, 4 dimensions or
# guards, 5 numerics.

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from importlib.metadata import PackageNotFoundError, version as _pkg_version
from pathlib import Path

import numpy as np

from . import evidence, model, simulate, solver, summarize
from .kernels import KernelSpec
from .model import ForwardProblem
from .whiten import whiten_auto

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIMENSIONS = 4
EXIT_NUMERICS = 5


class ConfigError(Exception):
    pass


def _library_version() -> str:
    try:
        return _pkg_version("kroneig")
    except PackageNotFoundError:
        return "unknown"


def _load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _prepare_out(out, force: bool) -> Path:
    out = Path(out)
    manifest = out / "manifest.json"
    if manifest.exists() and not force:
        raise FileExistsError(f"{manifest} exists; rerun with --force")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, args, config, timings: dict,
                    extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {k: str(v) for k, v in vars(args).items()
                   if isinstance(v, (str, Path)) and v is not None},
        "output_dir": str(out),
        "timings_s": timings,
        "library_version": _library_version(),
        "seed": getattr(args, "seed", None),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _apply_threads(n: int) -> None:
    if n and n > 0:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=n)


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    config_dict = _load_config(args.config)
    try:
        config = simulate.SimConfig.from_json_dict(config_dict)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad simulation config: {exc}") from exc
    if args.seed is not None:
        config = simulate.SimConfig.from_json_dict(
            {**config.to_json_dict(), "seed": args.seed})
    out = _prepare_out(args.out, args.force)
    t0 = time.perf_counter()
    problem, truth = simulate.simulate(config)
    model.save_problem(out, problem, force=True)
    model.write_matrix(out / "J_true.kmat", truth)
    (out / "sim.json").write_text(
        json.dumps(config.to_json_dict(), indent=2) + "\n")
    _write_manifest(out, "simulate", args, config.to_json_dict(),
                    {"simulate": time.perf_counter() - t0})
    return EXIT_OK


def _solve_specs(config: dict) -> tuple[KernelSpec, KernelSpec]:
    try:
        spatial = KernelSpec.from_json_dict(config["spatial"])
        temporal = KernelSpec.from_json_dict(config["temporal"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad kernel config: {exc}") from exc
    if not spatial.is_spatial or not temporal.is_temporal:
        raise ConfigError("config must give one spatial and one temporal kernel")
    return spatial, temporal


def cmd_solve(args) -> int:
    config = _load_config(args.config)
    spatial, temporal = _solve_specs(config)
    problem = model.load_problem(args.problem)
    violations = model.validate(problem)
    if violations:
        print("invalid problem: " + "; ".join(violations), file=sys.stderr)
        return EXIT_DIMENSIONS
    out = _prepare_out(args.out, args.force)

    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    if not problem.whitened:
        problem = whiten_auto(problem).problem
    timings["whiten"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    state = solver.precompute(problem, spatial, temporal)
    timings["precompute"] = time.perf_counter() - t0

    gamma2 = float(config.get("gamma2", spatial.gamma2))
    optimized = bool(config.get("optimize_gamma", False)) or args.optimize_gamma
    t0 = time.perf_counter()
    if optimized:
        gamma2, _ = evidence.optimize_gamma(state)
    state = solver.with_gamma(state, gamma2 / spatial.gamma2) \
        if gamma2 != spatial.gamma2 else state
    timings["optimize_gamma"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    mean, var = solver.posterior_grid(state)
    timings["posterior"] = time.perf_counter() - t0

    model.write_matrix(out / "mean.kmat", mean)
    model.write_matrix(out / "variance.kmat", var)

    report = {
        "spatial": state.spatial.to_json_dict(),
        "temporal": state.temporal.to_json_dict(),
        "gamma2": gamma2,
        "gamma2_optimized": optimized,
        "timings_s": timings,
        "eigenvalues": {
            "lambda_x_max": float(state.lambda_x.max()),
            "lambda_x_min": float(state.lambda_x.min()),
            "lambda_t_max": float(state.lambda_t.max()),
            "lambda_t_min": float(state.lambda_t.min()),
        },
    }

    if args.oracle:
        naive_mean = np.empty_like(mean)
        naive_var = np.empty_like(var)
        for j, x in enumerate(problem.source_points):
            for i, t in enumerate(problem.time_points):
                p = solver.naive_posterior_at(problem, state.spatial,
                                              state.temporal, x, t)
                naive_mean[j, i] = p.mean
                naive_var[j, i] = p.variance
        model.write_matrix(out / "oracle_mean.kmat", naive_mean)
        model.write_matrix(out / "oracle_variance.kmat", naive_var)
        denom = 1.0 + np.abs(naive_mean)
        dev_mean = float(np.max(np.abs(mean - naive_mean) / denom))
        dev_var = float(np.max(np.abs(var - naive_var)
                               / (1.0 + np.abs(naive_var))))
        report["oracle_max_relative_deviation"] = max(dev_mean, dev_var)

    (out / "solve.json").write_text(json.dumps(report, indent=2) + "\n")
    _write_manifest(out, "solve", args, config, timings)
    return EXIT_OK


def cmd_evidence(args) -> int:
    config = _load_config(args.config)
    try:
        spatial_kind = config.get("spatial_kind", "exponential")
        temporal_kind = config.get("temporal_kind", "temporal_delta")
        spatial_lengths = [float(x) for x in config.get(
            "spatial_lengths", evidence.DEFAULT_SPATIAL_LENGTHS)]
        temporal_lengths = [float(x) for x in config.get(
            "temporal_lengths", evidence.DEFAULT_TEMPORAL_LENGTHS)]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad evidence config: {exc}") from exc
    problem = model.load_problem(args.problem)
    out = _prepare_out(args.out, args.force)

    t0 = time.perf_counter()
    rows = evidence.evidence_grid(problem, spatial_kind, spatial_lengths,
                                  temporal_kind, temporal_lengths)
    elapsed = time.perf_counter() - t0

    with open(out / "evidence.csv", "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lx", "lt", "gamma2_opt", "nll", "logdet", "quad"])
        for row in rows:
            writer.writerow([row.spatial_length, row.temporal_length,
                             row.gamma2_opt, row.nll, row.logdet_term,
                             row.quad_term])
    _write_manifest(out, "evidence", args, config, {"evidence": elapsed})
    return EXIT_OK


def cmd_summarize(args) -> int:
    mean = model.read_matrix(args.mean)
    var = model.read_matrix(args.variance)
    if mean.shape != var.shape:
        print(f"mean {mean.shape} and variance {var.shape} differ",
              file=sys.stderr)
        return EXIT_DIMENSIONS
    times = model.read_matrix(args.times).ravel()
    if len(times) != mean.shape[1]:
        print(f"times length {len(times)} does not match {mean.shape[1]} "
              f"columns", file=sys.stderr)
        return EXIT_DIMENSIONS
    out = _prepare_out(args.out, args.force)

    t0 = time.perf_counter()
    pos = summarize.positivity(mean, var)
    mask = summarize.threshold_top_fraction(mean, args.fraction)
    model.write_matrix(out / "positivity.kmat", pos)
    model.write_matrix(out / "mask.kmat", mask.astype(float))

    window = (args.window[0], args.window[1]) if args.window else \
        (float(times[0]), float(times[-1]))
    strongest = np.argsort(-np.max(np.abs(mean), axis=1),
                           kind="stable")[:args.peak_sources]
    with open(out / "peaks.csv", "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source_index", "latency_s", "amplitude"])
        for j in strongest:
            latency, amplitude = summarize.peak_extract(mean[j], times, window)
            writer.writerow([int(j), latency, amplitude])
    _write_manifest(out, "summarize", args,
                    {"fraction": args.fraction, "window": list(window),
                     "peak_sources": args.peak_sources},
                    {"summarize": time.perf_counter() - t0})
    return EXIT_OK


def cmd_bench(args) -> int:
    out = _prepare_out(args.out, args.force)
    ladder = [int(x) for x in args.nt_ladder.split(",")]
    rng = np.random.default_rng(args.seed or 0)
    rows = []
    for n_t in ladder:
        config = simulate.SimConfig(seed=args.seed or 0, n_n=args.n_n,
                                    n_m=args.n_m, n_t=n_t,
                                    noise_kind="identity")
        problem, _ = simulate.simulate(config)
        problem = whiten_auto(problem).problem
        spatial = KernelSpec(kind="exponential", length_scale=0.1)
        temporal = KernelSpec(kind="temporal_exponential", length_scale=0.05)

        t0 = time.perf_counter()
        K_t = np.exp(-np.abs(np.subtract.outer(problem.time_points,
                                               problem.time_points)) / 0.05)
        np.linalg.eigh(K_t)
        t_eig = time.perf_counter() - t0

        t0 = time.perf_counter()
        state = solver.precompute(problem, spatial, temporal)
        t_pre = time.perf_counter() - t0

        t0 = time.perf_counter()
        solver.posterior_grid(state)
        t_post = time.perf_counter() - t0

        t0 = time.perf_counter()
        evidence.optimize_gamma(state)
        t_evd = time.perf_counter() - t0

        rows.append({"n_t": n_t, "eig_s": t_eig, "precompute_s": t_pre,
                     "posterior_s": t_post, "evidence_s": t_evd})

    with open(out / "timings.csv", "w", newline="\n") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]),
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)

    slope = None
    if len(rows) >= 2:
        x = np.log([r["n_t"] for r in rows])
        y = np.log([max(r["eig_s"], 1e-9) for r in rows])
        slope = float(np.polyfit(x, y, 1)[0])
    (out / "bench.json").write_text(json.dumps(
        {"rows": rows, "eig_loglog_slope": slope}, indent=2) + "\n")
    _write_manifest(out, "bench", args, {"nt_ladder": ladder,
                    "n_n": args.n_n, "n_m": args.n_m},
                    {"total": sum(sum(v for k, v in r.items() if k != "n_t")
                                  for r in rows)},
                    extra={"eig_loglog_slope": slope})
    return EXIT_OK


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kroneig",
        description="Space-time separable GP solver for linear inverse problems")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--force", action="store_true",
                       help="overwrite existing outputs")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=0,
                       help="BLAS thread cap (0 = auto)")

    p = sub.add_parser("simulate", help="generate a synthetic problem bundle")
    p.add_argument("--config", required=True)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="posterior mean/variance for a problem")
    p.add_argument("--problem", required=True, help="problem directory")
    p.add_argument("--config", required=True, help="kernel/hyperparameter JSON")
    p.add_argument("--optimize-gamma", action="store_true")
    p.add_argument("--oracle", action="store_true",
                   help="also run the dense oracle (small problems only)")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evidence", help="length-scale/magnitude evidence grid")
    p.add_argument("--problem", required=True)
    p.add_argument("--config", required=True)
    common(p)
    p.set_defaults(func=cmd_evidence)

    p = sub.add_parser("summarize", help="positivity, thresholding and peaks")
    p.add_argument("--mean", required=True)
    p.add_argument("--variance", required=True)
    p.add_argument("--times", required=True, help="times.kmat path")
    p.add_argument("--fraction", type=float, default=0.025)
    p.add_argument("--window", type=float, nargs=2, default=None)
    p.add_argument("--peak-sources", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("bench", help="timing ladder over n_t")
    p.add_argument("--nt-ladder", default="125,250,500,1000")
    p.add_argument("--n-n", type=int, default=300)
    p.add_argument("--n-m", type=int, default=5000)
    common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _apply_threads(args.threads)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileExistsError, PermissionError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (solver.SizeGuardError, ValueError) as exc:
        print(f"dimension error: {exc}", file=sys.stderr)
        return EXIT_DIMENSIONS
    except solver.NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":
    sys.exit(main())
