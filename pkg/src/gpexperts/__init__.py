"""Product-of-experts Gaussian process regression with calibrated expert weights."""

from .aggregate import (
    AggregationConfig,
    BarycenterMode,
    ExpertSlice,
    Functional,
    Method,
    Transform,
    WeightingSpec,
    aggregate,
)
from .ensemble import ExpertPool, predict_experts, predict_grbcm, train_pool, with_grbcm
from .errors import InvalidArgumentError, NumericalFailureError, ParseError
from .gp import Dataset, FitOptions, GaussianPrediction, Space, fit, predict, train_gp
from .numerics import Hyperparameters
from .partition import Partition, Strategy, kmeans_partition, random_partition

__version__ = "0.1.0"

__all__ = [
    "AggregationConfig",
    "BarycenterMode",
    "ExpertSlice",
    "Functional",
    "Method",
    "Transform",
    "WeightingSpec",
    "aggregate",
    "ExpertPool",
    "predict_experts",
    "predict_grbcm",
    "train_pool",
    "with_grbcm",
    "InvalidArgumentError",
    "NumericalFailureError",
    "ParseError",
    "Dataset",
    "FitOptions",
    "GaussianPrediction",
    "Space",
    "fit",
    "predict",
    "train_gp",
    "Hyperparameters",
    "Partition",
    "Strategy",
    "kmeans_partition",
    "random_partition",
]
