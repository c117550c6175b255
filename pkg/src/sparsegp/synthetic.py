"""Synthetic ground-truth generators, scoring rules, and the benchmark runner.

Four Gaussian data-generating scenarios span the sparse/nonstationary
grid on the domain [0, 10]: S1 (non-sparse, stationary Matern), S2
(sparse, stationary Wendland), S3 (sparse with polynomial signal
variance), S4 (non-sparse, nonstationary).  A fifth mechanism, D1, is the
piecewise-constant +-1 function on the unit interval used for the
bump-regularization study.  Each draw realizes training and test values
jointly from one sample path; training observations add white noise.

The scenario covariances are evaluated from their own closed-form
expressions here, on purpose not reusing the kernel module, so the
benchmark ground truth stays independent of the code under test.

The benchmark runner fits constant-mean GP variants (M1 stationary
Matern; M3 sparsity-discovering kernel with a Matern core; M4 the same
with the parametric nonstationary core) to replicated draws and tabulates
RMSE and CRPS relative to M1.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.special

from .basis import natural_cubic_basis
from .errors import ConfigError, NumericalError
from .mcmc import McmcConfig, PosteriorSampleSet, initial_chain_state, mcmc_run
from .model import Dataset, ModelSpec, PriorSpec, SolverOptions
from .predict import conditional_moments

__all__ = [
    "Scenario",
    "SyntheticDraw",
    "SCENARIOS",
    "MODELS",
    "generate_scenario_draw",
    "piecewise_ground_truth",
    "rmse",
    "crps_gaussian",
    "ScoreRow",
    "ScoreTable",
    "run_benchmark",
    "benchmark_model_spec",
    "benchmark_priors",
    "fit_scenario_model",
]

logger = logging.getLogger(__name__)

_SQRT_PI = math.sqrt(math.pi)
_JITTER = 1e-8


# ---------------------------------------------------------------------------
# scenario definitions (self-contained formulas)
# ---------------------------------------------------------------------------


def _matern25(t: np.ndarray) -> np.ndarray:
    s = math.sqrt(5.0) * t
    return (1.0 + s + s * s / 3.0) * np.exp(-s)


def _wendland(t: np.ndarray) -> np.ndarray:
    inside = t < 1.0
    ts = np.where(inside, t, 0.0)
    return np.where(inside, (1.0 - ts) ** 8 * (35.0 * ts**3 + 25.0 * ts**2 + 8.0 * ts + 1.0), 0.0)


def _s3_sigma2(x: np.ndarray) -> np.ndarray:
    return 0.05 * (x - 5.0) ** 4 + 0.001


def _s4_sigma2(x: np.ndarray) -> np.ndarray:
    return 0.2 * ((x - 10.0) / 3.0) ** 4 + 0.1


def _s4_Sigma(x: np.ndarray) -> np.ndarray:
    return 0.06 * (x / 3.0) ** 3 + 0.03


def _cov_s1(x: np.ndarray) -> np.ndarray:
    d = np.abs(x[:, None] - x[None, :])
    return _matern25(d / 0.5)


def _cov_s2(x: np.ndarray) -> np.ndarray:
    d = np.abs(x[:, None] - x[None, :])
    return _wendland(d / 1.5)


def _cov_s3(x: np.ndarray) -> np.ndarray:
    d = np.abs(x[:, None] - x[None, :])
    sig = np.sqrt(_s3_sigma2(x))
    return sig[:, None] * sig[None, :] * _wendland(d / 0.75)


def _cov_s4(x: np.ndarray) -> np.ndarray:
    sig = np.sqrt(_s4_sigma2(x))
    Sig = _s4_Sigma(x)
    mean_S = (Sig[:, None] + Sig[None, :]) / 2.0
    pref = sig[:, None] * sig[None, :] * (Sig[:, None] * Sig[None, :]) ** 0.25 / mean_S**0.5
    q = (x[:, None] - x[None, :]) ** 2 / mean_S
    return pref * _matern25(np.sqrt(q))


@dataclass(frozen=True)
class Scenario:
    """One data-generating mechanism of the simulation study."""

    tag: str
    tau2: float
    domain: tuple = (0.0, 10.0)
    n_train: int = 50
    n_test: int = 300
    description: str = ""


SCENARIOS = {
    "S1": Scenario("S1", tau2=0.1, description="non-sparse, stationary"),
    "S2": Scenario("S2", tau2=0.1, description="sparse, stationary"),
    "S3": Scenario("S3", tau2=0.475, description="sparse, nonstationary"),
    "S4": Scenario("S4", tau2=0.506, description="non-sparse, nonstationary"),
    "D1": Scenario("D1", tau2=0.1, domain=(0.0, 1.0), description="piecewise +-1 ground truth"),
}

_SCENARIO_COVS = {"S1": _cov_s1, "S2": _cov_s2, "S3": _cov_s3, "S4": _cov_s4}
_SCENARIO_INDEX = {tag: i for i, tag in enumerate(("S1", "S2", "S3", "S4", "D1"))}


@dataclass(frozen=True)
class SyntheticDraw:
    """One replicate: noisy training data plus noise-free test truth."""

    tag: str
    train_x: np.ndarray
    train_z: np.ndarray
    test_x: np.ndarray
    test_truth: np.ndarray
    seed: int


def piecewise_ground_truth(x):
    """The piecewise-constant +-1 function on the unit interval.

    -1 on (0, 0.25] and (0.5, 0.75]; +1 on (0.25, 0.5] and (0.75, 1).
    """
    x = np.asarray(x, dtype=float)
    negative = (x <= 0.25) | ((x > 0.5) & (x <= 0.75))
    return np.where(negative, -1.0, 1.0)


def generate_scenario_draw(scenario: Scenario, seed: int) -> SyntheticDraw:
    """Draw one replicate of a scenario, deterministic given the seed.

    Training inputs are uniform on the domain; test inputs are a regular
    grid.  For the Gaussian scenarios the truth is a single joint draw
    over train and test inputs, so both share one realization of the
    process; training observations add N(0, tau2) noise.
    """
    rng = np.random.default_rng([_SCENARIO_INDEX[scenario.tag], int(seed)])
    lo, hi = scenario.domain
    train_x = rng.uniform(lo, hi, scenario.n_train)
    if scenario.tag == "D1":
        test_x = lo + (np.arange(scenario.n_test) + 0.5) / scenario.n_test * (hi - lo)
        truth_train = piecewise_ground_truth(train_x)
        truth_test = piecewise_ground_truth(test_x)
    else:
        test_x = np.linspace(lo, hi, scenario.n_test)
        joint = np.concatenate([train_x, test_x])
        cov = _SCENARIO_COVS[scenario.tag](joint)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            jitter = _JITTER * float(np.max(np.diag(cov)))
            try:
                chol = np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
            except np.linalg.LinAlgError as exc:
                raise NumericalError(
                    f"scenario {scenario.tag} covariance is not positive definite "
                    f"(N={cov.shape[0]}, jitter {jitter:.1e})"
                ) from exc
        sample = chol @ rng.standard_normal(cov.shape[0])
        truth_train = sample[: scenario.n_train]
        truth_test = sample[scenario.n_train :]
    noise = rng.standard_normal(scenario.n_train) * math.sqrt(scenario.tau2)
    return SyntheticDraw(
        tag=scenario.tag,
        train_x=train_x[:, None],
        train_z=truth_train + noise,
        test_x=test_x[:, None],
        test_truth=truth_test,
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# scoring rules
# ---------------------------------------------------------------------------


def rmse(pred_mean, truth) -> float:
    """Root mean squared error between aligned vectors."""
    pred_mean = np.asarray(pred_mean, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred_mean.shape != truth.shape:
        raise ConfigError(f"length mismatch: {pred_mean.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((pred_mean - truth) ** 2)))


def crps_gaussian(mu, sigma, y):
    """Closed-form CRPS of a Gaussian predictive distribution.

    sigma * [ w (2 Phi(w) - 1) + 2 phi(w) - 1/sqrt(pi) ] with
    w = (y - mu)/sigma; degenerates to |y - mu| at sigma = 0.
    Broadcasts over array inputs.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(sigma < 0):
        raise ConfigError("sigma must be nonnegative")
    shape = np.broadcast_shapes(mu.shape, sigma.shape, y.shape)
    mu, sigma, y = (np.broadcast_to(a, shape) for a in (mu, sigma, y))
    positive = sigma > 0
    sig = np.where(positive, sigma, 1.0)
    w = (y - mu) / sig
    phi = np.exp(-0.5 * w * w) / math.sqrt(2.0 * math.pi)
    cdf = scipy.special.ndtr(w)
    out = sig * (w * (2.0 * cdf - 1.0) + 2.0 * phi - 1.0 / _SQRT_PI)
    out = np.where(positive, out, np.abs(y - mu))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# benchmark models
# ---------------------------------------------------------------------------

MODELS = ("M1", "M3", "M4")
_REFERENCE_MODEL = "M1"
_BENCH_SMOOTHNESS = 2.5
_BENCH_N1 = 4
_BENCH_N2 = 4
_BENCH_BASIS_COLUMNS = 4


def benchmark_model_spec(name: str, domain=(0.0, 10.0)) -> ModelSpec:
    """The model variants of the simulation study (constant mean assumed)."""
    if name == "M1":
        return ModelSpec(core="matern", smoothness=_BENCH_SMOOTHNESS, sparse=False)
    if name == "M3":
        return ModelSpec(core="matern", smoothness=_BENCH_SMOOTHNESS, sparse=True,
                         n1=_BENCH_N1, n2=_BENCH_N2)
    if name == "M4":
        basis = natural_cubic_basis(_BENCH_BASIS_COLUMNS, domain[0], domain[1])
        return ModelSpec(core="nonstationary", smoothness=_BENCH_SMOOTHNESS, sparse=True,
                         n1=_BENCH_N1, n2=_BENCH_N2, basis=basis)
    raise ConfigError(f"unsupported model {name!r} (supported: {MODELS})")


def benchmark_priors(domain, train_z) -> PriorSpec:
    """Default priors for a benchmark fit on the given domain.

    The noise and core-variance bounds scale with the observed variance so
    the samplers start and stay at the data's magnitude.
    """
    var = float(np.var(train_z))
    return PriorSpec.for_domain(
        coordinate_bounds=[list(domain)],
        tau2_upper=max(2.0 * var, 1e-6),
        core_variance_upper=max(4.0 * var, 1e-3),
    )


def bump_study_model(n1: int, n2: int) -> ModelSpec:
    """The bump-regularization study configuration.

    A unit-variance Matern correlation core (smoothness 2.5) times the
    sparse factor: the Wendland scale and the binary amplitudes carry all
    magnitude, so bump inclusion is identified.
    """
    return ModelSpec(core="matern", smoothness=2.5, sparse=True, n1=n1, n2=n2,
                     core_variance=1.0)


def fit_scenario_model(
    draw: SyntheticDraw,
    model_name: str,
    iterations: int,
    seed: int,
    solver: Optional[SolverOptions] = None,
    mcmc_config: Optional[McmcConfig] = None,
):
    """Fit one benchmark model to one draw; returns (samples, dataset, model, priors)."""
    domain = SCENARIOS[draw.tag].domain
    model = benchmark_model_spec(model_name, domain)
    priors = benchmark_priors(domain, draw.train_z)
    data = Dataset(
        x=draw.train_x,
        z=draw.train_z,
        w=Dataset.constant_mean_design(len(draw.train_z)),
    )
    init = initial_chain_state(data, priors, model, seed=seed, solver=solver)
    config = mcmc_config or McmcConfig(store_trace=False)
    samples = mcmc_run(data, priors, init, iterations, seed=seed, config=config, solver=solver)
    return samples, data, model, priors


def _score_fit(
    samples: PosteriorSampleSet,
    data: Dataset,
    draw: SyntheticDraw,
    solver: Optional[SolverOptions],
    prediction_draws: int,
):
    """Test-set RMSE of the mixed posterior mean and draw-averaged CRPS."""
    retained = samples.retained() or samples.records[-1:]
    if prediction_draws and len(retained) > prediction_draws:
        idx = np.unique(np.linspace(0, len(retained) - 1, prediction_draws).round().astype(int))
        retained = [retained[i] for i in idx]
    w_q = Dataset.constant_mean_design(draw.test_x.shape[0])
    means, crps_values = [], []
    for record in retained:
        theta = samples.theta(record)
        mean, var = conditional_moments(data, record.beta, theta, draw.test_x, w_q, solver)
        means.append(mean)
        crps_values.append(float(np.mean(crps_gaussian(mean, np.sqrt(var), draw.test_truth))))
    mixed_mean = np.mean(means, axis=0)
    return rmse(mixed_mean, draw.test_truth), float(np.mean(crps_values))


# ---------------------------------------------------------------------------
# score table
# ---------------------------------------------------------------------------


@dataclass
class ScoreRow:
    scenario: str
    model: str
    replicate: int
    rmse: float
    crps: float
    rel_rmse: float = math.nan
    rel_crps: float = math.nan


@dataclass
class ScoreTable:
    """Per-replicate scores with relatives against the stationary reference."""

    rows: list = field(default_factory=list)
    reference: str = _REFERENCE_MODEL

    def compute_relatives(self) -> None:
        ref = {}
        for row in self.rows:
            if row.model == self.reference:
                ref[(row.scenario, row.replicate)] = row
        for row in self.rows:
            base = ref.get((row.scenario, row.replicate))
            if base is None or not math.isfinite(base.rmse):
                row.rel_rmse = math.nan
                row.rel_crps = math.nan
            else:
                row.rel_rmse = row.rmse / base.rmse if base.rmse else math.nan
                row.rel_crps = row.crps / base.crps if base.crps else math.nan

    def mean_relative(self, scenario: str, model: str, metric: str = "rel_crps") -> float:
        vals = [
            getattr(r, metric)
            for r in self.rows
            if r.scenario == scenario and r.model == model and math.isfinite(getattr(r, metric))
        ]
        return float(np.mean(vals)) if vals else math.nan

    def summary(self) -> list:
        """Rows of (scenario, model, mean/5%/95% of relative RMSE and CRPS)."""
        out = []
        seen = []
        for row in self.rows:
            key = (row.scenario, row.model)
            if key not in seen:
                seen.append(key)
        for scenario, model in seen:
            rel_rmse = [r.rel_rmse for r in self.rows
                        if r.scenario == scenario and r.model == model and math.isfinite(r.rel_rmse)]
            rel_crps = [r.rel_crps for r in self.rows
                        if r.scenario == scenario and r.model == model and math.isfinite(r.rel_crps)]
            row = {
                "scenario": scenario,
                "model": model,
                "n": len(rel_crps),
                "mean_rel_rmse": float(np.mean(rel_rmse)) if rel_rmse else math.nan,
                "q05_rel_rmse": float(np.quantile(rel_rmse, 0.05)) if rel_rmse else math.nan,
                "q95_rel_rmse": float(np.quantile(rel_rmse, 0.95)) if rel_rmse else math.nan,
                "mean_rel_crps": float(np.mean(rel_crps)) if rel_crps else math.nan,
                "q05_rel_crps": float(np.quantile(rel_crps, 0.05)) if rel_crps else math.nan,
                "q95_rel_crps": float(np.quantile(rel_crps, 0.95)) if rel_crps else math.nan,
            }
            out.append(row)
        return out


# ---------------------------------------------------------------------------
# benchmark runner
# ---------------------------------------------------------------------------


def _task_seed(master: int, scenario_tag: str, replicate: int, salt: int = 0) -> int:
    ss = np.random.SeedSequence([int(master), _SCENARIO_INDEX[scenario_tag], int(replicate), salt])
    return int(ss.generate_state(1)[0])


def _benchmark_task(args):
    (tag, replicate, models, iterations, master_seed, prediction_draws, solver_kwargs, mcmc_kwargs) = args
    solver = SolverOptions(**solver_kwargs) if solver_kwargs else None
    scenario = SCENARIOS[tag]
    draw = generate_scenario_draw(scenario, seed=_task_seed(master_seed, tag, replicate, 0))
    rows = []
    for m_idx, name in enumerate(models):
        fit_seed = _task_seed(master_seed, tag, replicate, 10 + m_idx)
        try:
            config = McmcConfig(store_trace=False, **(mcmc_kwargs or {}))
            samples, data, _, _ = fit_scenario_model(
                draw, name, iterations, fit_seed, solver=solver, mcmc_config=config
            )
            score_rmse, score_crps = _score_fit(samples, data, draw, solver, prediction_draws)
        except (NumericalError, ConfigError) as exc:
            logger.warning("fit %s on %s replicate %d failed: %s", name, tag, replicate, exc)
            score_rmse, score_crps = math.nan, math.nan
        rows.append(ScoreRow(scenario=tag, model=name, replicate=replicate,
                             rmse=score_rmse, crps=score_crps))
    return rows


def run_benchmark(
    scenarios: Sequence[str],
    models: Sequence[str],
    replicates: int,
    mcmc_iterations: int,
    seed: int,
    workers: int = 1,
    prediction_draws: int = 150,
    solver: Optional[SolverOptions] = None,
    mcmc_overrides: Optional[dict] = None,
) -> ScoreTable:
    """Reproduce the simulation study at the requested scale.

    Fits every model to every (scenario, replicate) draw, scores test-set
    RMSE and draw-averaged CRPS from conditional predictions, and returns
    the per-replicate table with scores relative to the stationary
    reference model.  Replicates run on a process pool; every task derives
    its own seed from the master seed, so results do not depend on the
    worker count.  A failed fit records a missing cell and the run
    continues.
    """
    for tag in scenarios:
        if tag not in SCENARIOS:
            raise ConfigError(f"unknown scenario {tag!r}")
    for name in models:
        if name not in MODELS:
            raise ConfigError(f"unsupported model {name!r} (M2 is external prior work)")
    solver_kwargs = solver.__dict__.copy() if solver else None
    tasks = [
        (tag, rep, tuple(models), mcmc_iterations, seed, prediction_draws, solver_kwargs, mcmc_overrides)
        for tag in scenarios
        for rep in range(replicates)
    ]
    results = []
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_benchmark_task, tasks))
    else:
        results = [_benchmark_task(t) for t in tasks]
    table = ScoreTable()
    for rows in results:
        table.rows.extend(rows)
    table.compute_relatives()
    return table
