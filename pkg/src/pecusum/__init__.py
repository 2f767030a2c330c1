"""Break detection and estimation for panels of functional time series."""

from .breaks import (
    BreakReport,
    ClusterModel,
    break_report,
    classify_subjects,
    cluster_given_k,
    estimate_breakpoint,
    fit_clusters,
    group_parameters,
    information_criterion,
    pooled_breakpoint,
    select_k,
)
from .cusum import (
    CusumField,
    PeConfig,
    TestResult,
    cusum_statistic,
    pe_component,
    pe_cusum_test,
    pooled_cusum,
    subject_cusum,
    subject_sup_stats,
    threshold,
)
from .nulldist import (
    LongRunCovariance,
    NullSpec,
    critical_value,
    eigenvalues_of,
    estimate_lrc,
    fit_null,
    p_value,
    simulate_null,
)
from .panel import (
    FunctionalPanel,
    Grid,
    cross_sectional_mean,
    inner,
    l2_norm_sq,
    make_uniform_grid,
)

__version__ = "0.1.0"
