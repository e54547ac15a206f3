"""Density ratio models with data-adaptive basis functions.

Estimates the log density ratios of several samples with kernel density
estimates, extracts their principal directions under the pooled empirical
measure, and uses the leading eigenfunctions as the basis of a density ratio
model fitted by empirical likelihood. Kneip-Utikal and per-sample kernel
baselines and a Monte Carlo benchmark are included.

Example:
    ```python
    from drmfpca import DensityRatioAnalysis, load_csv

    # Long layout: columns group,value
    ms = load_csv("samples.csv")

    analysis = DensityRatioAnalysis(ms, bandwidth="adaptive")
    print(analysis.d_selection.d)

    # Quantiles of every population at three levels
    print(analysis.quantiles([0.1, 0.5, 0.9]))

    # Smoothed density of population 2
    print(analysis.density(2, [17.0, 18.0, 19.0]))
    ```
"""

from .analysis import DensityRatioAnalysis
from .baselines import KuModel, ku_fit, ku_quantile, np_densities, np_quantiles
from .el_drm import DrmFit, DrmParams, fit_drm, fitted_cdf, profile_grad, profile_loglik
from .estimators import drm_density, drm_quantile, empirical_quantile, quantile_table
from .exceptions import (
    BenchmarkError,
    ConvergenceError,
    DataError,
    DegenerateSampleError,
    DomainError,
    DRMError,
    EnvelopeError,
    EvaluationError,
    MassError,
    NumericError,
    ParseError,
    RankDeficiencyError,
    SelectionError,
    ValidationError,
)
from .fixed_basis import FixedBasis, parse_basis_spec, rich_basis
from .fpca_basis import (
    AdaptiveBasis,
    DSelection,
    Eigensystem,
    LogRatioSet,
    MHat,
    build_basis,
    eigensystem,
    log_ratios,
    m_hat,
    select_d,
)
from .kde import (
    BandwidthPolicy,
    BandwidthSearch,
    KdeEstimate,
    ParametricDensity,
    ReferenceFamily,
    kde_fit,
    reference_eigensystem,
    scaled_bandwidth,
    select_bandwidth,
    silverman_bandwidth,
)
from .multisample import Layout, MultiSample, PooledEmpirical, load_csv, pool
from .simbench import (
    BenchReport,
    ScenarioId,
    ScenarioSpec,
    generate,
    imse_accumulate,
    run_benchmark,
    truth,
)

__version__ = "0.1.0"
__all__ = [
    "DensityRatioAnalysis",
    "MultiSample",
    "PooledEmpirical",
    "Layout",
    "load_csv",
    "pool",
    "KdeEstimate",
    "ParametricDensity",
    "ReferenceFamily",
    "BandwidthPolicy",
    "BandwidthSearch",
    "kde_fit",
    "silverman_bandwidth",
    "scaled_bandwidth",
    "reference_eigensystem",
    "select_bandwidth",
    "LogRatioSet",
    "MHat",
    "Eigensystem",
    "AdaptiveBasis",
    "DSelection",
    "log_ratios",
    "m_hat",
    "eigensystem",
    "build_basis",
    "select_d",
    "FixedBasis",
    "rich_basis",
    "parse_basis_spec",
    "DrmParams",
    "DrmFit",
    "fit_drm",
    "fitted_cdf",
    "profile_loglik",
    "profile_grad",
    "drm_quantile",
    "drm_density",
    "empirical_quantile",
    "quantile_table",
    "KuModel",
    "ku_fit",
    "ku_quantile",
    "np_densities",
    "np_quantiles",
    "ScenarioId",
    "ScenarioSpec",
    "BenchReport",
    "truth",
    "generate",
    "imse_accumulate",
    "run_benchmark",
    "DRMError",
    "ValidationError",
    "DataError",
    "ParseError",
    "DegenerateSampleError",
    "DomainError",
    "NumericError",
    "RankDeficiencyError",
    "EvaluationError",
    "ConvergenceError",
    "SelectionError",
    "EnvelopeError",
    "MassError",
    "BenchmarkError",
]
