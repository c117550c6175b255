"""Adaptive block Metropolis-Hastings training of the Bayesian GP.

One iteration updates, in order: (1) the prior-mean coefficients, (2) the
core-kernel, noise, and Wendland scale/radius parameters, (3) the bump
centroids and radii, each by Gaussian random-walk MH whose proposal
covariance adapts to the chain history; (4) all bump amplitudes jointly,
proposed from their current Bernoulli inclusion probabilities so the
acceptance ratio reduces to a likelihood ratio; and (5) a closed-form
Beta-Bernoulli Gibbs refresh of the inclusion probabilities.

Bounded parameters walk on logit-transformed coordinates with Jacobian
corrections.  All randomness flows from the integer seed through
numpy's PCG64 generator, so runs are bit-reproducible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, NumericalError
from .kernels import KernelHyperparameters
from .model import (
    BLOCK_BUMPS,
    BLOCK_CORE,
    Dataset,
    LikelihoodEvaluator,
    ModelSpec,
    ParamLayout,
    PriorSpec,
    SolverOptions,
    log_prior,
)

__all__ = [
    "McmcConfig",
    "RunningMoments",
    "adaptive_proposal_update",
    "gibbs_pi_update",
    "ChainState",
    "SampleRecord",
    "PosteriorSampleSet",
    "initial_chain_state",
    "mcmc_run",
]

logger = logging.getLogger(__name__)

_RW_SCALE = 2.38**2
_JITTER_REL = 1e-6


@dataclass(frozen=True)
class McmcConfig:
    """Sampler schedule and bookkeeping options."""

    warmup: int = 200
    adapt_interval: int = 50
    initial_scale: float = 0.1
    adapt: bool = True
    thin: int = 1
    burn_in_fraction: float = 0.8
    flat_likelihood: bool = False
    debug_checks: bool = False
    store_trace: bool = True

    def __post_init__(self):
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigError("burn_in_fraction must be in [0, 1)")
        if self.thin < 1 or self.warmup < 0 or self.adapt_interval < 1:
            raise ConfigError("invalid sampler schedule")


class RunningMoments:
    """Streaming mean/covariance accumulator (Welford), ddof=1 covariance."""

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros((dim, dim))

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float)
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += np.outer(delta, x - self.mean)

    def covariance(self) -> Optional[np.ndarray]:
        if self.count < 2:
            return None
        return self._m2 / (self.count - 1)


def adaptive_proposal_update(history: np.ndarray, previous_cov: np.ndarray) -> np.ndarray:
    """Haario-style proposal covariance from a window of chain states.

    Returns ``(2.38^2 / d) * cov(history) + eps * I`` with
    ``eps = 1e-6 * trace(cov) / d`` (a fixed 1e-6 floor when the history is
    degenerate).  Falls back to the previous proposal when the history is
    too short or non-finite.
    """
    history = np.atleast_2d(np.asarray(history, dtype=float))
    if history.shape[0] < 2:
        return previous_cov
    emp = np.cov(history, rowvar=False, ddof=1)
    emp = np.atleast_2d(emp)
    if not np.all(np.isfinite(emp)):
        return previous_cov
    return _scaled_proposal(emp)


def _scaled_proposal(emp: np.ndarray) -> np.ndarray:
    d = emp.shape[0]
    trace = float(np.trace(emp))
    eps = _JITTER_REL * trace / d if trace > 0.0 else _JITTER_REL
    return (_RW_SCALE / d) * emp + eps * np.eye(d)


def gibbs_pi_update(a, rng: np.random.Generator):
    """Draw inclusion probabilities from their Beta(1 + a, 2 - a) full conditional."""
    a = np.asarray(a, dtype=float)
    if np.any((a != 0.0) & (a != 1.0)):
        raise ConfigError("amplitudes must be binary for the Gibbs update")
    return rng.beta(1.0 + a, 2.0 - a)


@dataclass
class BlockState:
    """Adaptation bookkeeping of one MH block."""

    name: str
    dim: int
    moments: RunningMoments
    proposal_chol: np.ndarray
    accepted: int = 0
    proposed: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0


@dataclass
class ChainState:
    """Mutable sampler state: parameters, caches, and adaptation statistics."""

    layout: ParamLayout
    beta: np.ndarray
    vec: np.ndarray
    amplitudes: np.ndarray
    pis: np.ndarray
    log_lik: float
    log_prior: float
    iteration: int = 0
    blocks: dict = field(default_factory=dict)
    dataset_noise: Optional[np.ndarray] = None

    @property
    def theta(self) -> KernelHyperparameters:
        return self.layout.theta(
            self.vec, amplitudes=self.amplitudes, pis=self.pis, dataset_noise=self.dataset_noise
        )

    @property
    def log_posterior(self) -> float:
        return self.log_lik + self.log_prior


@dataclass(frozen=True)
class SampleRecord:
    """One stored draw (flat parameterization; theta is materialized on demand)."""

    iteration: int
    beta: np.ndarray
    vec: np.ndarray
    amplitudes: np.ndarray
    pis: np.ndarray
    log_lik: float
    log_prior: float

    @property
    def log_posterior(self) -> float:
        return self.log_lik + self.log_prior


@dataclass
class PosteriorSampleSet:
    """Ordered chain output with a burn-in marker.

    ``records`` contains the initial state (iteration 0) and every thinned
    draw; ``retained()`` returns the draws strictly after the burn-in
    iteration, which is what prediction consumes.
    """

    records: list
    burn_in: int
    layout: ParamLayout
    dataset_noise: Optional[np.ndarray] = None
    acceptance: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)

    def retained(self) -> list:
        return [r for r in self.records if r.iteration > self.burn_in]

    def theta(self, record: SampleRecord) -> KernelHyperparameters:
        return self.layout.theta(
            record.vec, amplitudes=record.amplitudes, pis=record.pis, dataset_noise=self.dataset_noise
        )

    def __len__(self) -> int:
        return len(self.records)


def initial_chain_state(
    data: Dataset,
    priors: PriorSpec,
    model: ModelSpec,
    seed: int,
    solver: Optional[SolverOptions] = None,
    flat_likelihood: bool = False,
) -> ChainState:
    """Deterministic starting state.

    The mean coefficients come from ordinary least squares, bump centroids
    from a seeded Latin hypercube (generator ``PCG64([seed, 0])``), radii
    sit at half their prior bounds, amplitudes start on, and inclusion
    probabilities at 1/2.
    """
    if data.noise is not None and model.infer_noise:
        raise ConfigError("dataset has a fixed noise column; set infer_noise=False")
    layout = ParamLayout(model, priors)
    rng = np.random.default_rng([int(seed), 0])
    if data.p:
        beta, *_ = np.linalg.lstsq(data.w, data.z, rcond=None)
    else:
        beta = np.zeros(0)
    vec = layout.initial_vector(data, rng)
    nb = model.n_bumps
    amplitudes = np.ones(nb)
    pis = np.full(nb, 0.5)
    state = ChainState(
        layout=layout,
        beta=beta,
        vec=vec,
        amplitudes=amplitudes,
        pis=pis,
        log_lik=0.0,
        log_prior=0.0,
        dataset_noise=data.noise,
    )
    state.log_prior = log_prior(beta, state.theta, priors, model=model)
    if not math.isfinite(state.log_prior):
        raise ConfigError("initial state has zero prior density; check prior bounds")
    if flat_likelihood:
        state.log_lik = 0.0
    else:
        evaluator = LikelihoodEvaluator(data, solver)
        state.log_lik = evaluator(beta, state.theta)
    return state


def _init_blocks(state: ChainState, config: McmcConfig) -> None:
    layout = state.layout
    defs = [("mean", None, state.beta.size)]
    for name, blk in (("core", BLOCK_CORE), ("bumps", BLOCK_BUMPS)):
        idx = layout.block_indices(blk)
        defs.append((name, idx, idx.size))
    for name, idx, dim in defs:
        if dim == 0:
            continue
        state.blocks[name] = BlockState(
            name=name,
            dim=dim,
            moments=RunningMoments(dim),
            proposal_chol=config.initial_scale * np.eye(dim),
        )
    state.blocks["_indices"] = {
        "core": layout.block_indices(BLOCK_CORE),
        "bumps": layout.block_indices(BLOCK_BUMPS),
    }


def _block_psi(state: ChainState, name: str) -> np.ndarray:
    if name == "mean":
        return state.beta.copy()
    idx = state.blocks["_indices"][name]
    return state.layout.to_unconstrained(state.vec, idx)


def _mh_step(
    state: ChainState,
    name: str,
    loglik: Callable,
    priors: PriorSpec,
    model: ModelSpec,
    rng: np.random.Generator,
) -> None:
    """One random-walk MH update of a continuous block (in place)."""
    block: BlockState = state.blocks[name]
    layout = state.layout
    psi = _block_psi(state, name)
    step = block.proposal_chol @ rng.standard_normal(block.dim)
    psi_new = psi + step

    if name == "mean":
        beta_new, vec_new = psi_new, state.vec
        jac_cur = jac_new = 0.0
    else:
        idx = state.blocks["_indices"][name]
        beta_new = state.beta
        vec_new = state.vec.copy()
        vec_new[idx] = layout.from_unconstrained(psi_new, idx)
        jac_cur = layout.log_jacobian(psi, idx)
        jac_new = layout.log_jacobian(psi_new, idx)

    theta_new = layout.theta(
        vec_new, amplitudes=state.amplitudes, pis=state.pis, dataset_noise=state.dataset_noise
    )
    lp_new = log_prior(beta_new, theta_new, priors, model=model)
    block.proposed += 1
    log_alpha = -math.inf
    ll_new = None
    if math.isfinite(lp_new):
        try:
            ll_new = loglik(beta_new, theta_new)
            log_alpha = (ll_new + lp_new + jac_new) - (state.log_lik + state.log_prior + jac_cur)
        except NumericalError as exc:
            logger.warning("likelihood evaluation failed in block %s: %s (proposal rejected)", name, exc)
    u = rng.random()
    if math.log(u) < log_alpha:
        block.accepted += 1
        state.log_lik = ll_new
        state.log_prior = lp_new
        if name == "mean":
            state.beta = beta_new
        else:
            state.vec = vec_new


def _amplitude_step(
    state: ChainState,
    loglik: Callable,
    priors: PriorSpec,
    model: ModelSpec,
    rng: np.random.Generator,
) -> None:
    """Joint binary amplitude update; proposal equals the Bernoulli prior,
    so the MH ratio is purely a likelihood ratio."""
    proposal = (rng.random(state.amplitudes.size) < state.pis).astype(float)
    if np.array_equal(proposal, state.amplitudes):
        return
    theta_new = state.layout.theta(
        state.vec, amplitudes=proposal, pis=state.pis, dataset_noise=state.dataset_noise
    )
    try:
        ll_new = loglik(state.beta, theta_new)
    except NumericalError as exc:
        logger.warning("likelihood evaluation failed in amplitude block: %s (proposal rejected)", exc)
        return
    u = rng.random()
    if math.log(u) < ll_new - state.log_lik:
        state.amplitudes = proposal
        state.log_lik = ll_new
        state.log_prior = log_prior(state.beta, state.theta, priors, model=model)


def mcmc_run(
    data: Dataset,
    priors: PriorSpec,
    init: ChainState,
    iterations: int,
    seed: int,
    config: Optional[McmcConfig] = None,
    solver: Optional[SolverOptions] = None,
) -> PosteriorSampleSet:
    """Run the block sampler for `iterations` sweeps from `init`.

    Deterministic given `seed` (generator ``PCG64([seed, 1])``).  A
    likelihood failure inside a proposal rejects that proposal and is
    logged; the chain itself never aborts for numerical reasons.  With
    ``config.flat_likelihood`` the likelihood is forced to a constant,
    which turns the sampler into a prior sampler for validation.
    """
    config = config or McmcConfig()
    model = init.layout.model
    if config.flat_likelihood:
        loglik = lambda beta, theta: 0.0  # noqa: E731
    else:
        evaluator = LikelihoodEvaluator(data, solver)
        loglik = evaluator

    state = init
    _init_blocks(state, config)
    rng = np.random.default_rng([int(seed), 1])
    burn_in = int(math.floor(iterations * config.burn_in_fraction))
    records = [_record(state, 0)]
    trace = []

    block_names = [n for n in ("mean", "core", "bumps") if n in state.blocks]
    for k in range(1, iterations + 1):
        state.iteration = k
        for name in block_names:
            _mh_step(state, name, loglik, priors, model, rng)
        if state.amplitudes.size:
            _amplitude_step(state, loglik, priors, model, rng)
            state.pis = gibbs_pi_update(state.amplitudes, rng)
            state.log_prior = log_prior(state.beta, state.theta, priors, model=model)

        for name in block_names:
            block = state.blocks[name]
            block.moments.update(_block_psi(state, name))
            if config.adapt and k >= config.warmup and k % config.adapt_interval == 0:
                cov = block.moments.covariance()
                if cov is not None and np.all(np.isfinite(cov)):
                    proposal = _scaled_proposal(np.atleast_2d(cov))
                    try:
                        block.proposal_chol = np.linalg.cholesky(proposal)
                    except np.linalg.LinAlgError:
                        pass  # keep the previous proposal

        if config.debug_checks and k % 100 == 0:
            _assert_cache_integrity(state, data, priors, model, loglik)

        if k > burn_in and (k - burn_in) % config.thin == 0:
            records.append(_record(state, k))
        if config.store_trace:
            trace.append(_trace_row(state, k))

    acceptance = {
        name: state.blocks[name].acceptance_rate for name in block_names
    }
    return PosteriorSampleSet(
        records=records,
        burn_in=burn_in,
        layout=state.layout,
        dataset_noise=state.dataset_noise,
        acceptance=acceptance,
        trace=trace,
    )


def _record(state: ChainState, iteration: int) -> SampleRecord:
    return SampleRecord(
        iteration=iteration,
        beta=state.beta.copy(),
        vec=state.vec.copy(),
        amplitudes=state.amplitudes.copy(),
        pis=state.pis.copy(),
        log_lik=state.log_lik,
        log_prior=state.log_prior,
    )


def _trace_row(state: ChainState, iteration: int) -> dict:
    row = {
        "iteration": iteration,
        "log_lik": state.log_lik,
        "log_prior": state.log_prior,
    }
    layout = state.layout
    for idx in layout.block_indices(BLOCK_CORE):
        row[layout.names[idx]] = float(state.vec[idx])
    if state.amplitudes.size:
        row["active_bumps"] = float(np.sum(state.amplitudes))
    for name in ("mean", "core", "bumps"):
        if name in state.blocks:
            row[f"accept_{name}"] = state.blocks[name].acceptance_rate
    return row


def _assert_cache_integrity(state, data, priors, model, loglik) -> None:
    lp = log_prior(state.beta, state.theta, priors, model=model)
    assert abs(lp - state.log_prior) <= 1e-8 * max(1.0, abs(lp)), "log-prior cache drift"
    ll = loglik(state.beta, state.theta)
    assert abs(ll - state.log_lik) <= 1e-8 * max(1.0, abs(ll)), "log-likelihood cache drift"
