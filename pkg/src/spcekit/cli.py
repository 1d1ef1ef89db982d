"""Command-line harness: fit, sample, sobol, benchmark, validate-model.

Commands are thin wrappers over library calls; the benchmark loop is exposed
as :func:`run_benchmark` so tests and notebooks can call it directly.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import postproc, simulators
from .exceptions import ConfigurationError, SpcekitError, ValidationError
from .postproc import QuantileGrid, default_u_grid, quantiles_from_samples
from .spce import SpceModel, adaptive_build, write_json_atomic

DEFAULT_DEGREES = (1, 2, 3, 4, 5)
DEFAULT_QNORMS = (0.5, 0.75, 1.0)
DEFAULT_LATENTS = ("normal", "uniform")


def load_config(path) -> dict:
    if not os.path.exists(path):
        raise ConfigurationError(f"config file not found: {path}")
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib

        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path) as fh:
        return json.load(fh)


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(map(int, parts))).generate_state(1)[0])


def _build_kwargs(config) -> dict:
    return {
        "latent_candidates": tuple(config.get("latents", DEFAULT_LATENTS)),
        "degrees": tuple(config.get("degrees", DEFAULT_DEGREES)),
        "qnorms": tuple(config.get("qnorms", DEFAULT_QNORMS)),
    }


def _load_dataset(config, seed) -> simulators.Dataset:
    if "dataset" in config:
        path = config["dataset"]
        if not os.path.exists(path):
            raise ConfigurationError(f"dataset file not found: {path}")
        return simulators.Dataset.from_json(path)
    if "simulator" in config:
        n = int(config.get("n", 100))
        if n < 10:
            raise ConfigurationError("design size must be at least 10")
        return simulators.make_dataset(config["simulator"], n, seed=seed)
    raise ConfigurationError("config needs either a 'dataset' path or a 'simulator' id")


# ---------------------------------------------------------------------------
# fit / sample / sobol
# ---------------------------------------------------------------------------

def run_fit(config: dict, out_dir):
    seed = int(config.get("seed", 0))
    dataset = _load_dataset(config, seed=_derived_seed(seed, 1))
    model, report = adaptive_build(dataset, seed=seed, **_build_kwargs(config))
    os.makedirs(out_dir, exist_ok=True)
    model.save(os.path.join(out_dir, "model.json"))
    write_json_atomic(os.path.join(out_dir, "report.json"), report.to_dict())
    return model, report


def cmd_fit(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    run_fit(config, args.out or config.get("out", "."))
    return 0


def cmd_sample(args) -> int:
    model = SpceModel.load(args.model)
    if args.n < 1:
        raise ValidationError("need n >= 1 samples")
    if args.unconditional:
        draws = postproc.sample_unconditional(model, args.n, seed=args.seed)
    else:
        if args.x is None:
            raise ConfigurationError("provide --x or --unconditional")
        x = [float(v) for v in args.x.split(",")]
        draws = postproc.sample_conditional(model, x, args.n, seed=args.seed)
    out = args.out or "samples.csv"
    tmp = out + ".tmp"
    np.savetxt(tmp, draws, header="y", comments="", delimiter=",")
    os.replace(tmp, out)
    return 0


def cmd_sobol(args) -> int:
    model = SpceModel.load(args.model)
    report = postproc.sobol_indices(model)
    out = args.out or "sobol.json"
    write_json_atomic(out, report.to_dict())
    csv_path = os.path.splitext(out)[0] + ".csv"
    tmp = csv_path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["input", "first_order", "total", "mean_first_order", "mean_total"])
        for i in range(model.n_inputs):
            writer.writerow([i, repr(float(report.first_order[i])),
                             repr(float(report.total[i])),
                             repr(float(report.mean_first_order[i])),
                             repr(float(report.mean_total[i]))])
    os.replace(tmp, csv_path)
    return 0


def cmd_validate_model(args) -> int:
    SpceModel.load(args.model)  # raises on any invariant violation
    print(f"{args.model}: valid")
    return 0


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

def reference_bundle(simulator_id, test_x, u_grid, seed, n_rep):
    """Per-test-point reference quantiles and conditional moments.

    Analytic for gbm/bimodal; empirical (shared replication draws) for sir.
    Returns (quantile grids, means, variances, pooled replications or None).
    """
    test_x = np.atleast_2d(np.asarray(test_x, dtype=float))
    grids, means, variances = [], [], []
    pooled = None
    if simulator_id == "sir":
        pooled = []
        for i, x in enumerate(test_x):
            reps = simulators.sir_batch(np.tile(x, (n_rep, 1)),
                                        seed=_derived_seed(seed, i)).astype(float)
            grids.append(quantiles_from_samples(reps, u_grid))
            means.append(reps.mean())
            variances.append(reps.var(ddof=1))
            pooled.append(reps)
        pooled = np.concatenate(pooled)
    elif simulator_id == "gbm":
        for x in test_x:
            grids.append(QuantileGrid(u_grid, simulators.gbm_quantiles(x[0], x[1], u_grid)))
            mu, var = simulators.gbm_conditional_moments(x[0], x[1])
            means.append(mu)
            variances.append(var)
    elif simulator_id == "bimodal":
        for x in test_x:
            grids.append(QuantileGrid(u_grid, simulators.bimodal_quantiles(x[0], u_grid)))
            mu, var = simulators.bimodal_conditional_moments(x[0])
            means.append(mu)
            variances.append(var)
    else:
        raise ConfigurationError(f"unknown simulator id: {simulator_id!r}")
    return grids, np.asarray(means), np.asarray(variances), pooled


def unconditional_variance(simulator_id, pooled=None) -> float:
    """Var[Y] over both input uncertainty and intrinsic stochasticity."""
    from .orthopoly import family_for_marginal, gauss_rule

    if simulator_id == "sir":
        if pooled is None:
            raise ValidationError("sir variance needs pooled replications")
        return float(np.var(pooled, ddof=1))
    marginals = simulators.simulator_marginals(simulator_id)
    fam = family_for_marginal(marginals[0].standard, 64)
    rule = gauss_rule(fam, 64)
    if simulator_id == "gbm":
        nodes = [m.unstandardize(rule.nodes) for m in marginals]
        w = rule.weights
        x1 = nodes[0][:, None]
        x2 = nodes[1][None, :]
        mean, var = simulators.gbm_conditional_moments(x1, x2)
        ww = w[:, None] * w[None, :]
        e_mean = float((ww * mean).sum())
        return float((ww * (var + mean**2)).sum() - e_mean**2)
    if simulator_id == "bimodal":
        x = marginals[0].unstandardize(rule.nodes)
        mean, var = simulators.bimodal_conditional_moments(x)
        e_mean = float(rule.weights @ mean)
        return float(rule.weights @ (var + mean**2) - e_mean**2)
    raise ConfigurationError(f"unknown simulator id: {simulator_id!r}")


def run_replicate(simulator_id, n, replicate, master_seed, build_kwargs,
                  test_size=1000, n_rep=10_000, u_grid=None,
                  n_quantile_samples=postproc.N_QUANTILE_SAMPLES):
    """One benchmark cell: fresh design, fit, and Wasserstein error estimates."""
    if u_grid is None:
        u_grid = default_u_grid()
    start = time.perf_counter()
    data_seed = _derived_seed(master_seed, n, replicate, 1)
    fit_seed = _derived_seed(master_seed, n, replicate, 2)
    test_seed = _derived_seed(master_seed, n, replicate, 3)
    ref_seed = _derived_seed(master_seed, n, replicate, 4)
    eval_seed = _derived_seed(master_seed, n, replicate, 5)

    dataset = simulators.make_dataset(simulator_id, n, seed=data_seed)
    model, report = adaptive_build(dataset, seed=fit_seed, **build_kwargs)

    marginals = simulators.simulator_marginals(simulator_id)
    test_x = simulators.lhs_design(test_size, marginals, seed=test_seed)
    grids, means, variances, pooled = reference_bundle(
        simulator_id, test_x, u_grid, ref_seed, n_rep)
    var_y = unconditional_variance(simulator_id, pooled)

    epsilon = postproc.error_metric(model, _indexed_provider(grids), test_x, var_y,
                                    u_grid=u_grid, n_samples=n_quantile_samples,
                                    seed=eval_seed)

    from scipy import stats

    zq = stats.norm.ppf(u_grid)
    total = sum(
        postproc.wasserstein2(QuantileGrid(u_grid, mu + np.sqrt(var) * zq), grid)
        for mu, var, grid in zip(means, variances, grids)
    )
    oracle = total / len(grids) / var_y
    runtime = time.perf_counter() - start
    return {
        "simulator": simulator_id, "N": n, "replicate": replicate,
        "epsilon": epsilon, "oracle_epsilon": oracle, "runtime": runtime,
        "chosen": list(report.chosen), "cv_score": report.cv_score,
        "sigma": model.sigma, "eps_loo": model.metadata["eps_loo"],
        "var_y": var_y,
    }


def _indexed_provider(grids):
    """Reference provider for error_metric: test points arrive in list order."""
    it = iter(grids)

    def provider(x, u):
        return next(it)

    return provider


def run_benchmark(config: dict, out_dir=None, jobs: int = 1):
    """Error table over the (N, replicate) grid plus per-N summary statistics."""
    simulator_id = config.get("simulator")
    if simulator_id not in simulators.SIMULATOR_MARGINALS:
        raise ConfigurationError(f"unknown or missing simulator id: {simulator_id!r}")
    ladder = [int(n) for n in config.get("ladder", [100])]
    replicates = int(config.get("replicates", 1))
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    master_seed = int(config.get("seed", 0))
    test_size = int(config.get("test_size", 1000))
    n_rep = int(config.get("reference_replications", 10_000))
    u_grid = default_u_grid(int(config.get("u_grid_size", 1001)))
    n_qs = int(config.get("n_quantile_samples", postproc.N_QUANTILE_SAMPLES))
    build_kwargs = _build_kwargs(config)

    cells = [(n, r) for n in ladder for r in range(replicates)]

    def one(cell):
        n, r = cell
        try:
            return run_replicate(simulator_id, n, r, master_seed, build_kwargs,
                                 test_size=test_size, n_rep=n_rep, u_grid=u_grid,
                                 n_quantile_samples=n_qs)
        except SpcekitError as exc:
            return {"simulator": simulator_id, "N": n, "replicate": r,
                    "epsilon": None, "oracle_epsilon": None, "runtime": None,
                    "error": str(exc)}

    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_benchmark_cell, [
                (simulator_id, n, r, master_seed, build_kwargs, test_size, n_rep,
                 u_grid, n_qs) for n, r in cells
            ]))
    else:
        rows = [one(cell) for cell in cells]

    summary = {}
    for n in ladder:
        eps = [row["epsilon"] for row in rows
               if row["N"] == n and row.get("epsilon") is not None]
        if eps:
            q1, q2, q3 = np.percentile(eps, [25, 50, 75])
            summary[str(n)] = {"mean": float(np.mean(eps)), "median": float(q2),
                               "q1": float(q1), "q3": float(q3), "count": len(eps)}
        else:
            summary[str(n)] = {"mean": None, "median": None, "q1": None, "q3": None,
                               "count": 0}

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "results.csv")
        tmp = csv_path + ".tmp"
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["simulator", "N", "replicate", "epsilon",
                             "oracle_epsilon", "runtime", "status"])
            for row in rows:
                writer.writerow([
                    row["simulator"], row["N"], row["replicate"],
                    "" if row["epsilon"] is None else repr(row["epsilon"]),
                    "" if row["oracle_epsilon"] is None else repr(row["oracle_epsilon"]),
                    "" if row["runtime"] is None else f"{row['runtime']:.3f}",
                    row.get("error", "ok"),
                ])
        os.replace(tmp, csv_path)
        # runtime excluded: the summary is the deterministic report artifact
        write_json_atomic(os.path.join(out_dir, "summary.json"), {
            "simulator": simulator_id, "seed": master_seed, "ladder": ladder,
            "replicates": replicates,
            "epsilon": {f"{row['N']}:{row['replicate']}": row["epsilon"] for row in rows},
            "oracle_epsilon": {
                f"{row['N']}:{row['replicate']}": row["oracle_epsilon"] for row in rows
            },
            "summary": summary,
        })
    return rows, summary


def _benchmark_cell(packed):
    (simulator_id, n, r, master_seed, build_kwargs, test_size, n_rep,
     u_grid, n_qs) = packed
    try:
        return run_replicate(simulator_id, n, r, master_seed, build_kwargs,
                             test_size=test_size, n_rep=n_rep, u_grid=u_grid,
                             n_quantile_samples=n_qs)
    except SpcekitError as exc:
        return {"simulator": simulator_id, "N": n, "replicate": r, "epsilon": None,
                "oracle_epsilon": None, "runtime": None, "error": str(exc)}


def cmd_benchmark(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    out_dir = args.out or config.get("out", "benchmark_out")
    run_benchmark(config, out_dir=out_dir, jobs=args.jobs)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spcekit",
                                     description="Stochastic PCE surrogate toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a surrogate from a config file")
    p_fit.add_argument("config")
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--out", default=None)
    p_fit.set_defaults(func=cmd_fit)

    p_sample = sub.add_parser("sample", help="draw samples from a fitted model")
    p_sample.add_argument("model")
    p_sample.add_argument("--x", default=None, help="comma-separated input point")
    p_sample.add_argument("--unconditional", action="store_true")
    p_sample.add_argument("-n", type=int, default=1000)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--out", default=None)
    p_sample.set_defaults(func=cmd_sample)

    p_sobol = sub.add_parser("sobol", help="Sobol' indices of a fitted model")
    p_sobol.add_argument("model")
    p_sobol.add_argument("--out", default=None)
    p_sobol.set_defaults(func=cmd_sobol)

    p_bench = sub.add_parser("benchmark", help="convergence study on a bundled simulator")
    p_bench.add_argument("config")
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--out", default=None)
    p_bench.add_argument("--jobs", type=int, default=1)
    p_bench.set_defaults(func=cmd_benchmark)

    p_val = sub.add_parser("validate-model", help="check a model file against the schema")
    p_val.add_argument("model")
    p_val.set_defaults(func=cmd_validate_model)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpcekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
