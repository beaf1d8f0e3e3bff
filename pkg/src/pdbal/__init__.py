"""Targeted Bayesian active learning with probabilistic diameter-based acquisition."""

from ._backend import BACKEND
from .acquisition import (
    AcquisitionConfig,
    ScoreReport,
    dbal_score_deterministic,
    eig_score,
    pdbal_score_exact,
    pdbal_score_mc,
    score_pool,
    select_query,
    variance_score,
)
from .bench import ScenarioConfig, TrajectoryRecord, run_active_loop, targeted_ls_demo
from .diagnostics import avg_diameter, check_combine_split, check_lemma1, potential_trace, splitting_value
from .distances import d_euclidean_scaled, d_first, d_influence, d_kendall, d_max
from .errors import (
    AssumptionError,
    ContractViolation,
    DomainError,
    ImpossibleEvidenceError,
    InitializationError,
    PDBALError,
    QuadratureError,
    SamplerFailure,
)
from .likelihoods import BetaMean, FiniteModelClass, LinearGaussian, Logistic, Poisson, triple_kernel
from .posterior import (
    Dataset,
    FinitePosterior,
    GaussianPosterior,
    MCMCConfig,
    PosteriorEnsemble,
    conjugate_linear_gaussian,
    metropolis_glm_posterior,
)

__version__ = "0.1.0"
