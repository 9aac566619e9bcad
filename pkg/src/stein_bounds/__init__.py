"""Normal approximation via Stein's method.

Exact finite-support laws, bounded solutions of the Stein equation,
zero-bias/size-bias couplings, exchangeable pairs, explicit error bounds,
and the distances they dominate.
"""

__version__ = "0.1.0"

from .distributions import (
    FiniteDist,
    IndepSumModel,
    MomentSummary,
    StateCapError,
    iid_model,
    make_finite,
    moments,
    rademacher,
    standardize,
    sum_law,
)
from .distances import (
    EmpiricalSample,
    MCDistances,
    distances_mc,
    kolmogorov_exact,
    normal_cdf,
    normal_pdf,
    normal_quantile,
    tv_exact,
    wasserstein_exact,
)
from .stein_equation import (
    SteinSolution,
    TestFunction,
    characterization_residual,
    discrepancy_identity_check,
    indicator,
    lipschitz,
    bounded,
    smoothed_indicator,
    solve,
    solve_indicator,
    solve_smooth,
)
from .couplings import (
    KKernel,
    SizeBias,
    ZeroBias,
    k_kernel,
    size_bias,
    zero_bias,
    zero_bias_indep_sampler,
)
from .exchangeable import (
    CombinatorialModel,
    PairLaw,
    PairStats,
    antisymmetry_check,
    enumerate_pair_comb,
    enumerate_pair_indep,
    generator_identity_residual,
    pair_comb,
    pair_indep,
    pair_stats,
    regression_check,
)
from .bounds import (
    BoundReport,
    attach_empirical,
    be_iid,
    concentration_bound,
    dk_exchangeable,
    dtv_interpolation,
    dw_exchangeable,
    dw_indep,
    dw_zero_bias,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    random_admissible_matrix,
    run,
)
