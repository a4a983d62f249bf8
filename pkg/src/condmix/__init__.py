"""Conditional density estimation with mixtures of Gaussian regressions.

The weights of the mixture are softmax functions of polynomial weight
functions of the covariate, the component means are polynomials and the
covariances are free. Fitting uses Newton-EM, the number of components is
chosen by penalized likelihood.
"""

from .divergence import (
    DivergenceEstimate,
    gaussian_hellinger_exact,
    gaussian_kl_exact,
    hellinger_tensorized,
    jkl_hellinger_lower_constant,
    jkl_tensorized,
    kl_tensorized,
)
from .exceptions import (
    BracketViolated,
    CondMixError,
    DegenerateComponent,
    DomainError,
    InitFailure,
    InvalidBox,
    NoJump,
    NotSPD,
    PreconditionViolated,
    TooFewPoints,
    UnsupportedDimension,
)
from .experiments import ExperimentConfig, ExperimentResult, run_experiment, run_ladder, truth_density
from .initialization import InitConfig, initialize, random_lines, y_axis_kmeans
from .model import (
    CovarianceDecomp,
    Dataset,
    MixtureParams,
    ModelSpec,
    log_density,
    log_gaussian,
    log_weights,
    loglik,
    make_params,
    responsibilities,
    sample,
)
from .newton_em import FitConfig, FitResult, e_step, fit, m_step_means_covs, newton_weight_update, variance_floor
from .polybasis import PolyFn, basis_size, basis_vector, design_matrix, enumerate_multiindices, poly_eval
from .selection import SelectionResult, model_dim, penalized_criterion, select, slope_heuristic
from .theory import (
    EntropyConstants,
    entropy_constants,
    sigma_m_bound,
    theoretical_penalty,
    verify_gaussian_bracket,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
