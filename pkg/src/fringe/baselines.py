"""Comparison attribution methods: plain gradient and SmoothGrad."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelGraph
from .tensor import Tensor


@dataclass(frozen=True)
class SmoothGradConfig:
    samples: int = 25
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.noise_sigma <= 0.0:
            raise ValueError("noise_sigma must be positive")


def gradient_attribution(m: ModelGraph, x: Tensor, t: int,
                         score_target: str = "logit") -> Tensor:
    """Plain input gradient of the target score."""
    return m.grad_score(x, t, score_target)


def smoothgrad(m: ModelGraph, x: Tensor, t: int, cfg: SmoothGradConfig,
               score_target: str = "logit") -> Tensor:
    """Mean gradient over Gaussian-perturbed copies; deterministic under seed."""
    rng = np.random.default_rng(cfg.seed)
    acc = np.zeros(x.size)
    for _ in range(cfg.samples):
        noise = rng.normal(0.0, cfg.noise_sigma, size=x.size)
        acc += m.grad_score(Tensor(x.shape, x.data + noise), t, score_target).data
    return Tensor(x.shape, acc / cfg.samples)
