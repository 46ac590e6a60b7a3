"""Empirical and adaptive Bernstein copulas, sampling, and tail-risk simulation."""
from .bernstein_math import (
    BetaParams,
    CoefficientTensor,
    GridSpec,
    Hyperbox,
    bernstein_density_eval,
    bernstein_poly_eval,
    beta_pdf,
    delta_difference,
    delta_tensor,
    is_d_monotone_on_grid,
)
from .copula_models import (
    BernsteinCopula,
    GaussianCopulaModel,
    ReferenceCopula,
    SampleBatch,
    bernstein_cdf,
    bernstein_pdf,
    fit_gaussian,
    gaussian_pdf,
    sample_bernstein,
    sample_gaussian,
    sample_reference,
)
from .risk_engine import (
    MarginalModel,
    PortfolioSpec,
    RiskReport,
    histogram,
    inverse_cdf,
    simulate_portfolio,
    tvar_estimate,
    var_estimate,
)
from .skeleton import (
    DiscreteSkeleton,
    PseudoRankMatrix,
    RankMatrix,
    adaptive_pipeline,
    augment,
    check_admissible,
    choose_multiplier,
    empirical_skeleton,
    ranks_from_data,
    reduce,
)

__version__ = "0.1.0"
