"""Robust nonparametric density estimation.

Fit plain, variable-bandwidth, and robust kernel density estimates from
possibly contaminated samples, quantify their sensitivity to contamination
through influence functions, and evaluate them with KL divergence,
anomaly-detection ROC/AUC, and signed-rank comparisons.
"""

from .data import Dataset, load_csv, make_rng, mix_contamination, synth_gaussian_mixture, synth_uniform_box
from .estimators import (
    ConvexityReport,
    DensityModel,
    FitConfig,
    FitMeta,
    check_strict_convexity,
    evaluate,
    fit_kde,
    fit_median_rkde,
    fit_rkde,
    fit_rkde_auto,
    fit_vkde,
    fit_weighted_rkde,
    load_model,
    median_nn_bandwidth,
    objective,
    save_model,
)
from .evaluation import (
    BenchmarkRow,
    EvalReport,
    KlEstimate,
    SignedRankResult,
    kl_divergence,
    roc_auc,
    run_benchmark,
    sample_from_model,
    signed_rank_across_datasets,
    wilcoxon_signed_rank,
)
from .exceptions import DataError, DimensionMismatch, FitError, NumericsError, RkdeError, UnsupportedError
from .influence import InfluenceResult, alpha_measure, beta_measure, evaluate_influence, influence, kde_influence, rkde_influence
from .kernels import KernelSpec, cross_gram, eval_kernel, gram, tau
from .loss import LossSpec, phi, psi, q_fn, rho, select_hampel_params

__version__ = "0.1.0"
