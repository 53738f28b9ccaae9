"""Variational grouped-horseshoe regression with penalized-credible-region
group selection."""

__version__ = "0.1.0"

from .cavi import DEFAULT_TAU_GRID, CaviFit, CaviState, HyperParams, elbo, init_cavi, run_cavi, select_tau
from .grouped_model import CenteredDataset, GroupedDesign, GroupSpec, build_grouped_design, center
from .pencr import (
    CvResult,
    SparseEstimate,
    compute_group_scales,
    cross_validate_lambda,
    fit_cavi,
    sparsify,
    sparsify_nongrouped,
)
from .predict import PredictionModel, make_model, predict_point

__all__ = [
    "DEFAULT_TAU_GRID",
    "CaviFit",
    "CaviState",
    "CenteredDataset",
    "CvResult",
    "GroupSpec",
    "GroupedDesign",
    "HyperParams",
    "PredictionModel",
    "SparseEstimate",
    "build_grouped_design",
    "center",
    "compute_group_scales",
    "cross_validate_lambda",
    "elbo",
    "fit_cavi",
    "init_cavi",
    "make_model",
    "predict_point",
    "run_cavi",
    "select_tau",
    "sparsify",
    "sparsify_nongrouped",
]
