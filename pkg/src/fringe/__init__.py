"""Geodesic-path attribution toolkit for small differentiable classifiers."""

from .baselines import SmoothGradConfig, gradient_attribution, smoothgrad
from .driver import (
    AttributionResult,
    FringeConfig,
    TrajectoryRecord,
    run_fringe,
    run_ig_reference,
)
from .model import LayerSpec, ModelGraph, PredictiveState
from .solver import SmoothingOperator, SolveConfig, SolveResult, pcg_solve
from .tensor import Tensor, dot, elementwise, norm2

__version__ = "0.1.0"

__all__ = [
    "AttributionResult",
    "FringeConfig",
    "LayerSpec",
    "ModelGraph",
    "PredictiveState",
    "SmoothGradConfig",
    "SmoothingOperator",
    "SolveConfig",
    "SolveResult",
    "Tensor",
    "TrajectoryRecord",
    "dot",
    "elementwise",
    "gradient_attribution",
    "norm2",
    "pcg_solve",
    "run_fringe",
    "run_ig_reference",
    "smoothgrad",
]
