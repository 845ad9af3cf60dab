"""Matrix-free pullback Fisher metric G(x) = J^T S(p) J.

S(p) = diag(p) - p p^T is applied analytically; G is never materialized.
Each metric application costs one JVP and one VJP.
"""

from __future__ import annotations

import numpy as np

from .model import ModelGraph, PredictiveState
from .tensor import Tensor


def fisher_logit_apply(p: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(diag(p) - p p^T) w, the softmax Fisher matrix in logit coordinates."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    return p * w - p * float(np.dot(p, w))


class PullbackContext:
    """Frozen evaluation point for the pullback metric.

    ``metric_apply_calls`` counts metric applications made through this
    context; variant tests rely on it.
    """

    def __init__(self, model: ModelGraph, x: Tensor, state: PredictiveState = None):
        self.model = model
        self.x = x
        self.state = state if state is not None else model.forward(x)
        self.metric_apply_calls = 0


def metric_apply(ctx: PullbackContext, v: Tensor) -> Tensor:
    """G(x) v via jvp -> analytic Fisher -> vjp."""
    ctx.metric_apply_calls += 1
    jv = ctx.model.jvp(ctx.x, v)
    sw = fisher_logit_apply(ctx.state.probs.data, jv.data)
    return ctx.model.vjp(ctx.x, Tensor(jv.shape, sw))


def metric_norm_sq(ctx: PullbackContext, v: Tensor) -> float:
    """<v, G v>, clamped to be nonnegative."""
    gv = metric_apply(ctx, v)
    return max(0.0, float(np.dot(v.data, gv.data)))
