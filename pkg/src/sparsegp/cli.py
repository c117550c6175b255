"""Command-line interface: train, predict, simulate, benchmark, kernel-export.

Exit codes are part of the external contract: 0 success, 2 configuration
failure, 3 data validation failure, 4 numerical abort.  Each failure
prints one machine-parsable JSON line on stderr.  Primary outputs are
written atomically (temp file + rename), so a nonzero exit never leaves a
partial artifact behind.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .config import (
    RunConfig,
    config_fingerprint,
    load_config,
    read_table,
    theta_from_dict,
    theta_to_dict,
    write_csv_atomic,
    write_text_atomic,
)
from .errors import ConfigError, DataValidationError, NumericalError
from .kernels import ConstantCore, y_kernel_diag
from .mcmc import initial_chain_state, mcmc_run
from .model import Dataset
from .predict import mix_conditional, predict_unconditional
from .sparse_linalg import assemble_covariance, save_matrix_market, sparsity_fraction
from .synthetic import SCENARIOS, generate_scenario_draw, run_benchmark

logger = logging.getLogger(__name__)


def _fail(kind: str, exc: Exception) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")


def _require_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("this command requires --config")
    return load_config(args.config)


def _dataset_from_file(path, config: RunConfig) -> Dataset:
    x, z, w, tau2, dropped = read_table(path)
    if z is None:
        raise DataValidationError(f"{path}: observation column 'z' is required")
    noise_mode = config.model.noise
    if noise_mode == "column":
        if tau2 is None:
            raise DataValidationError(f"{path}: noise mode 'column' requires a tau2 column")
        return Dataset(x=x, z=z, w=w, noise=tau2)
    return Dataset(x=x, z=z, w=w)


def _effective_seed(args, config: RunConfig) -> int:
    return args.seed if args.seed is not None else config.mcmc.seed


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    config = _require_config(args)
    data = _dataset_from_file(args.data, config)
    seed = _effective_seed(args, config)
    solver = config.solver_options(args.workers)
    priors = config.priors(data)
    model = config.model_spec(data.dim, priors.coordinate_bounds)
    init = initial_chain_state(data, priors, model, seed=seed, solver=solver)
    samples = mcmc_run(
        data, priors, init, config.mcmc.iterations,
        seed=seed, config=config.mcmc_config(), solver=solver,
    )

    os.makedirs(args.output_dir, exist_ok=True)
    lines = []
    for record in samples.retained():
        lines.append(json.dumps({
            "iteration": record.iteration,
            "beta": record.beta.tolist(),
            "theta": theta_to_dict(samples.theta(record)),
            "log_posterior": record.log_posterior,
        }))
    write_text_atomic(os.path.join(args.output_dir, "samples.jsonl"), "\n".join(lines) + "\n")

    if samples.trace:
        keys = ["iteration", "log_lik", "log_prior"]
        extra = sorted(k for k in samples.trace[0] if k not in keys)
        header = keys + extra
        rows = [[row.get(k, "") for k in header] for row in samples.trace]
        write_csv_atomic(os.path.join(args.output_dir, "trace.csv"), header, rows)

    manifest = {
        "command": "train",
        "config_sha256": config_fingerprint(config),
        "seed": seed,
        "iterations": config.mcmc.iterations,
        "burn_in": samples.burn_in,
        "retained_draws": len(samples.retained()),
        "acceptance": samples.acceptance,
        "versions": _versions(),
        "generator": "numpy.random.PCG64",
    }
    write_text_atomic(
        os.path.join(args.output_dir, "manifest.json"),
        json.dumps(manifest, sort_keys=True, indent=2) + "\n",
    )
    return 0


def _versions() -> dict:
    import scipy

    return {"sparsegp": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------


def _load_samples(path):
    pairs = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for k, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    d = json.loads(line)
                    beta = np.asarray(d["beta"], dtype=float)
                    theta = theta_from_dict(d["theta"])
                except (KeyError, ValueError, ConfigError) as exc:
                    raise DataValidationError(f"{path}: bad sample on line {k}: {exc}") from exc
                pairs.append((beta, theta))
    except OSError as exc:
        raise DataValidationError(f"cannot read samples {path}: {exc}") from exc
    if not pairs:
        raise DataValidationError(f"{path}: no posterior samples found")
    return pairs


def cmd_predict(args) -> int:
    pairs = _load_samples(args.samples)
    x, z, w, tau2, _ = read_table(args.data)
    if z is None:
        raise DataValidationError(f"{args.data}: observation column 'z' is required")
    data = Dataset(x=x, z=z, w=w, noise=tau2)
    qx, _, qw, _, _ = read_table(args.query)
    seed = args.seed if args.seed is not None else 0
    config = load_config(args.config) if args.config else RunConfig()
    solver = config.solver_options(args.workers)
    if args.max_posterior_draws and len(pairs) > args.max_posterior_draws:
        idx = np.unique(np.linspace(0, len(pairs) - 1, args.max_posterior_draws).round().astype(int))
        pairs = [pairs[i] for i in idx]

    d = qx.shape[1]
    header = [f"x{k + 1}" for k in range(d)] + ["post_mean", "post_sd"]
    if qx.shape[0] == 0:
        write_csv_atomic(args.output, header, [])
        return 0

    if args.unconditional:
        empty = Dataset(x=np.zeros((0, d)), z=np.zeros(0), w=np.zeros((0, data.p)))
        result = mix_conditional(pairs, empty, qx, qw, seed=seed, solver=solver)
        draws = []
        for k in range(args.draws):
            beta, theta = pairs[k % len(pairs)]
            y = predict_unconditional(beta, theta, qx, qw, seed=seed * 100003 + k, n_draws=1)
            draws.append(y[0])
        draw_cols = list(np.asarray(draws).T) if draws else None
    else:
        result = mix_conditional(pairs, data, qx, qw, seed=seed, solver=solver,
                                 draws_per_sample=1 if args.draws else 0)
        draw_cols = None
        if args.draws:
            base = result.draws  # one realization per posterior draw
            reps = math.ceil(args.draws / base.shape[0])
            draw_cols = list(np.tile(base, (reps, 1))[: args.draws].T)

    rows = []
    for i in range(qx.shape[0]):
        row = list(qx[i]) + [result.mean[i], result.sd[i]]
        if draw_cols is not None:
            row += [draw_cols[i][k] for k in range(len(draw_cols[i]))]
        rows.append(row)
    if draw_cols is not None:
        header += [f"draw_{k + 1}" for k in range(len(draw_cols[0]))]
    write_csv_atomic(args.output, header, rows)
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    tag = args.scenario.upper()
    if tag not in SCENARIOS:
        raise ConfigError(f"unknown scenario tag {args.scenario!r} (choose from {sorted(SCENARIOS)})")
    seed = args.seed if args.seed is not None else 0
    os.makedirs(args.output_dir, exist_ok=True)
    for rep in range(args.replicates):
        draw = generate_scenario_draw(SCENARIOS[tag], seed=int(
            np.random.SeedSequence([seed, rep]).generate_state(1)[0]
        ))
        train_rows = [[draw.train_x[i, 0], draw.train_z[i]] for i in range(len(draw.train_z))]
        test_rows = [[draw.test_x[i, 0], draw.test_truth[i]] for i in range(len(draw.test_truth))]
        write_csv_atomic(os.path.join(args.output_dir, f"train_{tag}_{rep:03d}.csv"),
                         ["x1", "z"], train_rows)
        write_csv_atomic(os.path.join(args.output_dir, f"test_{tag}_{rep:03d}.csv"),
                         ["x1", "z"], test_rows)
    return 0


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


def cmd_benchmark(args) -> int:
    config = _require_config(args)
    bench = config.benchmark
    seed = _effective_seed(args, config)
    solver = config.solver_options(1)  # worker pool is over replicates, not assembly
    workers = args.workers or config.solver.workers
    if workers == 0:
        env = os.environ.get("SPARSEGP_WORKERS")
        workers = int(env) if env else (os.cpu_count() or 1)
    table = run_benchmark(
        scenarios=bench.scenarios,
        models=bench.models,
        replicates=bench.replicates,
        mcmc_iterations=bench.mcmc_iterations,
        seed=seed,
        workers=workers,
        prediction_draws=bench.prediction_draws,
        solver=solver,
    )
    os.makedirs(args.output_dir, exist_ok=True)
    write_csv_atomic(
        os.path.join(args.output_dir, "scores.csv"),
        ["scenario", "model", "replicate", "rmse", "crps", "rel_rmse", "rel_crps"],
        [[r.scenario, r.model, r.replicate, r.rmse, r.crps, r.rel_rmse, r.rel_crps]
         for r in table.rows],
    )
    summary = table.summary()
    if summary:
        header = list(summary[0].keys())
        write_csv_atomic(
            os.path.join(args.output_dir, "summary.csv"),
            header,
            [[row[k] for k in header] for row in summary],
        )
    return 0


# ---------------------------------------------------------------------------
# kernel-export
# ---------------------------------------------------------------------------


def cmd_kernel_export(args) -> int:
    config = _require_config(args)
    if not config.hyperparameters:
        raise ConfigError("kernel-export requires a 'hyperparameters' section in the config")
    theta = theta_from_dict(config.hyperparameters)
    x, _, _, _, _ = read_table(args.inputs)
    solver = config.solver_options(args.workers)
    if args.normalized:
        sparse_theta = dataclasses.replace(theta, core=ConstantCore())
        a = assemble_covariance(x, sparse_theta, solver.plan(), include_noise=False)
        diag = y_kernel_diag(sparse_theta, x)
        if np.any(diag <= 0):
            raise NumericalError("normalization impossible: zero diagonal in C_sparse")
        scale = np.sqrt(diag)
        values = a.values / (scale[_rows_of(a)] * scale[a.col_indices])
        values[_rows_of(a) == a.col_indices] = 1.0
        a = dataclasses.replace(a, values=values)
    else:
        a = assemble_covariance(x, theta, solver.plan(), include_noise=False)
    frac = sparsity_fraction(a)
    save_matrix_market(args.output + ".tmp", a, comments=[f"sparsity_fraction = {frac!r}"])
    os.replace(args.output + ".tmp", args.output)
    sys.stdout.write(f"sparsity_fraction = {frac!r}\n")
    return 0


def _rows_of(a) -> np.ndarray:
    counts = np.diff(a.row_offsets)
    return np.repeat(np.arange(a.dim), counts)


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsegp",
        description="Exact GP with a sparsity-discovering kernel: training, prediction, benchmarks.",
    )
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker count (default: config, SPARSEGP_WORKERS, or CPU count)")
    parser.add_argument("--verbose", action="store_true", help="verbose logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run MCMC training")
    p.add_argument("data", help="training data CSV (x1..xd, z, optional w1..wp, tau2)")
    p.add_argument("output_dir", help="directory for samples.jsonl, trace.csv, manifest.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="posterior prediction at query inputs")
    p.add_argument("samples", help="posterior samples JSONL from train")
    p.add_argument("data", help="training data CSV")
    p.add_argument("query", help="query inputs CSV (x1..xd, optional w1..wp)")
    p.add_argument("output", help="output CSV path")
    p.add_argument("--unconditional", action="store_true",
                   help="draw from the prior implied by posterior samples instead of conditioning")
    p.add_argument("--draws", type=int, default=0, help="number of sampled realizations to append")
    p.add_argument("--max-posterior-draws", type=int, default=None,
                   help="thin the posterior sample set to at most this many draws")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="write synthetic scenario replicates")
    p.add_argument("scenario", help="scenario tag: S1, S2, S3, S4, or D1")
    p.add_argument("replicates", type=int, help="number of replicates")
    p.add_argument("output_dir", help="directory for train/test CSV files")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("benchmark", help="run the simulation-study benchmark")
    p.add_argument("output_dir", help="directory for scores.csv and summary.csv")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("kernel-export", help="assemble and export a covariance matrix")
    p.add_argument("inputs", help="input locations CSV (x1..xd)")
    p.add_argument("output", help="Matrix Market output path")
    p.add_argument("--normalized", action="store_true",
                   help="export the normalized sparse factor instead of C_y")
    p.set_defaults(func=cmd_kernel_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        _fail("config", exc)
        return 2
    except DataValidationError as exc:
        _fail("data", exc)
        return 3
    except (NumericalError, np.linalg.LinAlgError) as exc:
        _fail("numerical", exc)
        return 4


if __name__ == "__main__":
    sys.exit(main())
