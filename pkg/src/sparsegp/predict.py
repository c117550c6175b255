"""Posterior prediction: conditional and unconditional simulation.

For one posterior draw (beta, theta) the latent process at query inputs is
Gaussian with

    m_{y|z} = W_q beta + C_{y,z} C_z^{-1} (z - W beta)
    C_{y|z} = C_y - C_{y,z} C_z^{-1} C_{z,y}

and the Monte Carlo predictive mixes these over retained posterior draws:
the reported mean is the draw-average of the conditional means and the
reported variance combines the within-draw variance with the between-draw
spread of the means.  Unconditional simulation draws from the prior
N(W_q beta, C_y) implied by a posterior hyperparameter sample.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericalError
from .kernels import KernelHyperparameters, y_kernel_diag, y_kernel_matrix, z_kernel_matrix
from .mcmc import PosteriorSampleSet
from .model import Dataset, SolverOptions
from .sparse_linalg import assemble_covariance, minres_solve

__all__ = [
    "PredictionResult",
    "conditional_moments",
    "mix_conditional",
    "predict_conditional",
    "predict_unconditional",
]

logger = logging.getLogger(__name__)

_CHOL_JITTER = 1e-8


@dataclass(frozen=True)
class PredictionResult:
    """Posterior predictive summary at the query inputs."""

    query: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    draws: Optional[np.ndarray] = None  # (n_draws, n_query) when requested

    def __post_init__(self):
        if self.mean.shape != self.sd.shape or self.mean.shape[0] != self.query.shape[0]:
            raise ConfigError("prediction arrays must align with the query inputs")
        if np.any(self.sd < 0):
            raise ConfigError("standard deviations must be nonnegative")


def _query_design(query_w, m: int, p: int) -> np.ndarray:
    if query_w is None:
        if p:
            raise ConfigError("model has mean covariates; query design matrix is required")
        return np.zeros((m, 0))
    w = np.asarray(query_w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if w.shape != (m, p):
        raise ConfigError(f"query design has shape {w.shape}, expected ({m}, {p})")
    return w


def _chol_with_jitter(cov: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = _CHOL_JITTER * float(np.max(np.diag(cov)))
        logger.warning("%s Cholesky failed; retrying with jitter %.3e", what, jitter)
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"{what} is not positive definite even after jitter") from exc


def conditional_moments(
    data: Dataset,
    beta: np.ndarray,
    theta: KernelHyperparameters,
    query_x,
    query_w=None,
    solver: Optional[SolverOptions] = None,
    full_cov: bool = False,
):
    """Closed-form conditional mean and marginal variances for one draw.

    Returns ``(mean, var)`` or ``(mean, var, cov)`` with ``full_cov``.
    With no data (N = 0) the prior moments are returned.
    """
    solver = solver or SolverOptions()
    beta = np.asarray(beta, dtype=float).ravel()
    query_x = np.atleast_2d(np.asarray(query_x, dtype=float))
    m = query_x.shape[0]
    w_q = _query_design(query_w, m, data.p)
    prior_mean = w_q @ beta if beta.size else np.zeros(m)

    if data.n == 0:
        var = y_kernel_diag(theta, query_x)
        if full_cov:
            return prior_mean, var, y_kernel_matrix(theta, query_x)
        return prior_mean, var

    resid = data.z - (data.w @ beta if beta.size else 0.0)
    cross = y_kernel_matrix(theta, query_x, data.x)  # (m, n)
    prior_var = y_kernel_diag(theta, query_x)

    if solver.resolve_method(data.n) == "dense":
        cov_z = z_kernel_matrix(theta, data.x)
        try:
            chol = scipy.linalg.cho_factor(cov_z, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError("observed covariance is not positive definite") from exc
        alpha = scipy.linalg.cho_solve(chol, resid, check_finite=False)
        mean = prior_mean + cross @ alpha
        v = scipy.linalg.solve_triangular(chol[0], cross.T, lower=True, check_finite=False)
        var = np.maximum(prior_var - np.sum(v * v, axis=0), 0.0)
        if full_cov:
            cov = y_kernel_matrix(theta, query_x) - v.T @ v
            return mean, var, cov
        return mean, var

    a = assemble_covariance(data.x, theta, solver.plan(), include_noise=True)
    alpha, report = minres_solve(a, resid, tol=solver.minres_tol,
                                 max_iters=solver.minres_max_iter_factor * data.n)
    if not report.converged:
        raise NumericalError("MINRES did not converge while computing the predictive mean")
    mean = prior_mean + cross @ alpha
    var = np.empty(m)
    columns = np.empty((data.n, m)) if full_cov else None
    for i in range(m):
        sol, rep = minres_solve(a, cross[i], tol=solver.minres_tol,
                                max_iters=solver.minres_max_iter_factor * data.n)
        if not rep.converged:
            raise NumericalError("MINRES did not converge while computing predictive variances")
        var[i] = prior_var[i] - float(cross[i] @ sol)
        if full_cov:
            columns[:, i] = sol
    var = np.maximum(var, 0.0)
    if full_cov:
        cov = y_kernel_matrix(theta, query_x) - cross @ columns
        return mean, var, cov
    return mean, var


def mix_conditional(
    posterior_draws,
    data: Dataset,
    query_x,
    query_w=None,
    draws_per_sample: int = 0,
    seed: int = 0,
    solver: Optional[SolverOptions] = None,
) -> PredictionResult:
    """Mix conditional predictions over an iterable of (beta, theta) pairs.

    The mean is the average of the per-draw conditional means; the variance
    adds the average within-draw conditional variance to the spread of the
    means across draws.  ``draws_per_sample`` > 0 additionally samples
    realizations of the latent process from each draw's conditional law.
    A draw whose solve fails is skipped with a log entry.
    """
    query_x = np.atleast_2d(np.asarray(query_x, dtype=float))
    rng = np.random.default_rng([int(seed), 2])
    means, variances, sampled = [], [], []
    for k, (beta, theta) in enumerate(posterior_draws):
        try:
            if draws_per_sample > 0:
                mean, var, cov = conditional_moments(
                    data, beta, theta, query_x, query_w, solver, full_cov=True
                )
            else:
                mean, var = conditional_moments(data, beta, theta, query_x, query_w, solver)
        except NumericalError as exc:
            logger.warning("skipping posterior draw %d: %s", k, exc)
            continue
        means.append(mean)
        variances.append(var)
        if draws_per_sample > 0:
            maxdiag = float(np.max(np.diag(cov))) if cov.size else 0.0
            if maxdiag <= 0.0:
                sampled.append(np.tile(mean, (draws_per_sample, 1)))
            else:
                chol = _chol_with_jitter(cov, "conditional covariance")
                noise = rng.standard_normal((draws_per_sample, query_x.shape[0]))
                sampled.append(mean + noise @ chol.T)
    if not means:
        raise NumericalError("every posterior draw failed during prediction")

    means = np.asarray(means)
    variances = np.asarray(variances)
    mean = means.mean(axis=0)
    between = np.mean((means - mean) ** 2, axis=0)
    var = variances.mean(axis=0) + between
    draws = np.vstack(sampled) if sampled else None
    return PredictionResult(query=query_x, mean=mean, sd=np.sqrt(var), draws=draws)


def predict_conditional(
    samples: PosteriorSampleSet,
    data: Dataset,
    query_x,
    query_w=None,
    draws_per_sample: int = 0,
    seed: int = 0,
    solver: Optional[SolverOptions] = None,
    max_posterior_draws: Optional[int] = None,
) -> PredictionResult:
    """Monte Carlo conditional prediction mixed over retained posterior draws."""
    retained = samples.retained()
    if not retained:
        raise ConfigError("no retained posterior draws after burn-in")
    if max_posterior_draws is not None and len(retained) > max_posterior_draws:
        idx = np.linspace(0, len(retained) - 1, max_posterior_draws).round().astype(int)
        retained = [retained[i] for i in np.unique(idx)]
    pairs = ((record.beta, samples.theta(record)) for record in retained)
    return mix_conditional(
        pairs, data, query_x, query_w,
        draws_per_sample=draws_per_sample, seed=seed, solver=solver,
    )


def predict_unconditional(
    beta: np.ndarray,
    theta: KernelHyperparameters,
    query_x,
    query_w=None,
    seed: int = 0,
    n_draws: int = 1,
) -> np.ndarray:
    """Draws from the prior N(W_q beta, C_y) implied by one posterior sample.

    Returns an ``(n_draws, n_query)`` array.  A degenerate (all-zero)
    covariance returns the mean exactly.
    """
    beta = np.asarray(beta, dtype=float).ravel()
    query_x = np.atleast_2d(np.asarray(query_x, dtype=float))
    m = query_x.shape[0]
    p = beta.size
    w_q = _query_design(query_w, m, p)
    mean = w_q @ beta if p else np.zeros(m)
    cov = y_kernel_matrix(theta, query_x)
    rng = np.random.default_rng([int(seed), 3])
    maxdiag = float(np.max(np.diag(cov))) if m else 0.0
    if maxdiag <= 0.0:
        return np.tile(mean, (n_draws, 1))
    chol = _chol_with_jitter(cov, "prior covariance")
    noise = rng.standard_normal((n_draws, m))
    return mean + noise @ chol.T
