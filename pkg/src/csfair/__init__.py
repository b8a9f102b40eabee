"""Fairness-regularized training with Cauchy-Schwarz divergence and
kernel dependence measures."""

from .divergence import (
    DivergenceResult,
    cs_divergence,
    distance_covariance,
    hsic,
    kl_gaussian_moment,
    mean_disparity,
    mmd_squared,
    pr_mutual_information,
)
from .gaussian import (
    GaussianParams,
    cs_closed_form,
    kde_quadrature_cs,
    kl_closed_form,
    verify_cs_kl_inequality,
)
from .kernels import (
    BandwidthMode,
    KernelFamily,
    KernelSpec,
    gram_sums,
    kernel_eval,
    median_heuristic,
)
from .trainer import TrainConfig, fairness_batch_loss, sweep, train

__all__ = [
    "BandwidthMode",
    "DivergenceResult",
    "GaussianParams",
    "KernelFamily",
    "KernelSpec",
    "TrainConfig",
    "cs_closed_form",
    "cs_divergence",
    "distance_covariance",
    "fairness_batch_loss",
    "gram_sums",
    "hsic",
    "kde_quadrature_cs",
    "kernel_eval",
    "kl_closed_form",
    "kl_gaussian_moment",
    "mean_disparity",
    "median_heuristic",
    "mmd_squared",
    "pr_mutual_information",
    "sweep",
    "train",
    "verify_cs_kl_inequality",
]

__version__ = "0.1.0"
