"""Greedy column-generation multiple-kernel learning for exponential-family GLMs."""

__version__ = "0.1.0"

from .glm import Family
from .kernels import KernelSpec, PartitionManifest, ViewSpec, enumerate_views, linear, polynomial, rbf
from .solver import AdamConfig, FitConfig, ModelState, Penalty, fit, predict, predict_mean

__all__ = ["Family", "KernelSpec", "PartitionManifest", "ViewSpec", "enumerate_views", "linear",
           "polynomial", "rbf", "AdamConfig", "FitConfig", "ModelState", "Penalty", "fit",
           "predict", "predict_mean", "__version__"]
