"""Exact Gaussian processes with sparsity-discovering compactly supported kernels.

The kernel is a product of an arbitrary positive definite core kernel and
a compactly supported factor built from bump functions and a Wendland
polynomial, so covariance matrices carry exact structural zeros.  Training
is fully Bayesian (adaptive block Metropolis-Hastings with Beta-Bernoulli
regularization of the bump amplitudes); the linear algebra runs on sparse
matrices through stochastic Lanczos quadrature and MINRES, with a dense
Cholesky path for small problems.
"""

__version__ = "0.1.0"

from .basis import basis_from_spec, natural_cubic_basis, polynomial_basis
from .errors import ConfigError, DataValidationError, NumericalError, SparseGPError
from .kernels import (
    BumpFunction,
    ConstantCore,
    HeteroskedasticNoise,
    HomoskedasticNoise,
    KernelHyperparameters,
    ParametricNonstationary,
    SparseKernelParams,
    StationaryMatern,
    bump_eval,
    core_eval,
    matern_correlation,
    sparse_component_eval,
    sparse_kernel_eval,
    wendland_eval,
    y_kernel_eval,
    y_kernel_matrix,
    z_kernel_eval,
    z_kernel_matrix,
)
from .mcmc import (
    ChainState,
    McmcConfig,
    PosteriorSampleSet,
    adaptive_proposal_update,
    gibbs_pi_update,
    initial_chain_state,
    mcmc_run,
)
from .model import (
    Dataset,
    LikelihoodEvaluator,
    ModelSpec,
    PriorSpec,
    SolverOptions,
    log_marginal_likelihood,
    log_prior,
    sample_theta_from_priors,
)
from .predict import (
    PredictionResult,
    conditional_moments,
    mix_conditional,
    predict_conditional,
    predict_unconditional,
)
from .sparse_linalg import (
    AssemblyPlan,
    SolverReport,
    SparseSymmetricMatrix,
    assemble_covariance,
    dense_logdet_solve,
    lanczos_logdet,
    load_matrix_market,
    minres_solve,
    save_matrix_market,
    sparsity_fraction,
)
from .synthetic import (
    SCENARIOS,
    Scenario,
    ScoreTable,
    SyntheticDraw,
    crps_gaussian,
    generate_scenario_draw,
    piecewise_ground_truth,
    rmse,
    run_benchmark,
)
