"""Second-order calibration toolkit.

Estimate, lower-bound, and repair the calibration of predictors that emit a
mean and an epistemic variance, via sech-perturbed scores and tensor
Chebyshev regression of the conditional moment functions.
"""

from .core_types import (
    CorruptedFitError,
    MomentPair,
    Score2,
    Snapshot2,
    SnapshotBatch,
    epistemic_variance,
    is_feasible,
    project_moments,
    project_moments_arrays,
)
from .sech_kernel import SechKernel, default_kernels, perturb_score
from .poly_fit import BasisSpec, PolyFit, fit_ridge, schedule, select_model, theta_of
from .ce_estimation import CeReport, Recalibrator, ce2_plugin
from .ground_truth import TruthSurface, build_surface

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "CeReport",
    "CorruptedFitError",
    "MomentPair",
    "PolyFit",
    "Recalibrator",
    "Score2",
    "SechKernel",
    "Snapshot2",
    "SnapshotBatch",
    "TruthSurface",
    "build_surface",
    "ce2_plugin",
    "default_kernels",
    "epistemic_variance",
    "fit_ridge",
    "is_feasible",
    "perturb_score",
    "project_moments",
    "project_moments_arrays",
    "schedule",
    "select_model",
    "theta_of",
    "__version__",
]
