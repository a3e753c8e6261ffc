"""Robust kernel machine regression: robust Gram centering, kernel mixed
models with interaction components, score tests and a gene-triple scan."""

from __future__ import annotations

__version__ = "0.1.0"

from .losses import DegenerateTuningError, LossKind, RobustLoss, make_loss, tune_constants
from .kernels import (
    DataView,
    GramMatrix,
    ViewKind,
    classical_center,
    gaussian_gram,
    hadamard,
    ibs_gram,
    linear_gram,
    median_bandwidth,
)
from .centering import (
    DegenerateWeightsError,
    RobustCentering,
    center_with_loss,
    kirwls_objective,
    kirwls_weights,
    robust_center,
)
from .mixed_model import (
    ComponentSet,
    MixedModelFit,
    assemble_components,
    reml_fit,
    reml_loglik,
    reml_score,
)
from .inference import (
    TestKind,
    TestResult,
    composite_score_test,
    overall_score_test,
    satterthwaite,
    scaled_chisq_pvalue,
)
from .pipeline import PipelineResult, build_components, gram_for_view
from .simulate import (
    PowerRow,
    RocResult,
    SimConfig,
    SimDataset,
    estimate_power,
    replicate_rng,
    roc_curve,
    roc_from_pvalues,
    run_replicate,
    simulate_dataset,
)
from .config import (
    RunConfig,
    config_from_mapping,
    load_config,
    load_sim_config,
    sim_config_from_mapping,
)
from .bundle import BundleError, ScanBundle, load_bundle, save_bundle
from .scan import triple_scan, write_outputs

__all__ = [
    "BundleError",
    "ComponentSet",
    "DataView",
    "DegenerateTuningError",
    "DegenerateWeightsError",
    "GramMatrix",
    "LossKind",
    "MixedModelFit",
    "PipelineResult",
    "PowerRow",
    "RobustCentering",
    "RobustLoss",
    "RocResult",
    "RunConfig",
    "ScanBundle",
    "SimConfig",
    "SimDataset",
    "TestKind",
    "TestResult",
    "ViewKind",
    "assemble_components",
    "build_components",
    "center_with_loss",
    "classical_center",
    "composite_score_test",
    "config_from_mapping",
    "estimate_power",
    "gaussian_gram",
    "gram_for_view",
    "hadamard",
    "ibs_gram",
    "kirwls_objective",
    "kirwls_weights",
    "linear_gram",
    "load_bundle",
    "save_bundle",
    "load_config",
    "load_sim_config",
    "make_loss",
    "median_bandwidth",
    "overall_score_test",
    "reml_fit",
    "reml_loglik",
    "reml_score",
    "replicate_rng",
    "robust_center",
    "roc_curve",
    "roc_from_pvalues",
    "run_replicate",
    "satterthwaite",
    "scaled_chisq_pvalue",
    "sim_config_from_mapping",
    "simulate_dataset",
    "triple_scan",
    "tune_constants",
    "write_outputs",
    "__version__",
]
