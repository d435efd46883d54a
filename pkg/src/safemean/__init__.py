"""safemean: safe estimators of the mean of non-negative heavy-tailed samples.

The central estimator is the smallest mean over a KL-divergence ball around
the empirical distribution, solved through its one-dimensional concave dual.
Companion estimators (deflated mean, Wasserstein, truncated mean, variance
regularization, total-variation mass removal) share one interface, and a
Monte Carlo harness measures disappointment and conservatism probabilities
against their theoretical bounds.
"""

__version__ = "0.1.0"

from .core import (
    DiscreteDistribution,
    EstimateResult,
    LogNormal,
    Pareto,
    PointMass,
    RadiusSchedule,
    Sample,
    ScaledBernoulli,
    UniformBounded,
    read_sample_file,
    sample_mean,
    sample_variance,
    survival_probability,
    true_mean,
    true_variance,
)
from .dual import (
    DualSolution,
    DualSolverError,
    kl_dro_dual_objective,
    kl_inf,
    log_likelihood_ratio,
    primal_witness,
    solve_kl_dro_dual,
    solve_kl_dro_dual_batch,
)
from .estimators import (
    EstimatorConfig,
    estimate,
    kl_disappointment_bound,
    kl_disappointment_bound_general,
    kl_dro_estimator,
    sample_mean_delta,
    truncated_mean_estimator,
    truncation_constants,
    tv_estimator,
    variance_reg_estimator,
    wasserstein_estimator,
)
from .montecarlo import (
    RateFit,
    TrialReport,
    conservatism_probability,
    cramer_rate,
    disappointment_probability,
    draw_sample,
    exact_bernoulli_event_probability,
    laplace_transform,
    pareto_variance_ratio_limit,
    rate_fit,
    variance_ratio_curve,
    wilson_interval,
)
from .oracle import (
    CertificateReport,
    kl_projection_bruteforce,
    random_feasible_probe,
    random_instances,
    verify_certificate,
)
