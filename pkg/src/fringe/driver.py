"""Geodesic-tracking attribution driver.

Builds waypoints on the Fisher-Rao geodesic from the model's prediction to
the maximum-entropy reference, realizes an input-space trajectory with
damped natural-gradient steps under dual trust regions, and accumulates
attributions with a trapezoidal rule along the realized path.  The final
sign flip restores the conventional baseline-to-input orientation.

Also provides the straight-line integrated-gradients reference.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import geometry
from .geometry import EPS_THETA, build_waypoints, fr_distance, kl_divergence, sync_steps
from .model import ModelGraph
from .pullback import PullbackContext, metric_norm_sq
from .solver import (
    SmoothingOperator,
    SolveConfig,
    biharmonic_apply,
    pcg_solve,
)
from .tensor import NonFiniteError, ShapeMismatchError, Tensor

log = logging.getLogger("fringe")

VARIANTS = (
    "full",
    "euclidean_tracking",
    "unregularized_fr",
    "gamma_step_only",
    "gamma_prior_only",
    "maxent_prior_control",
)

# Variants that never touch the pullback metric: raw-gradient directions,
# capped only by eta_max.
_METRIC_FREE = ("euclidean_tracking", "maxent_prior_control")


@dataclass(frozen=True)
class FringeConfig:
    tau: float = 1e-3
    eta_max: float = 1.0
    delta_euc: Optional[float] = None  # None disables the Euclidean cap
    solve: SolveConfig = field(default_factory=SolveConfig)
    variant: str = "full"
    epsilon: float = 1e-8
    score_target: str = "logit"
    t_cap: int = 512
    record_inputs: bool = False

    def __post_init__(self):
        if self.tau <= 0.0 or self.eta_max <= 0.0 or self.epsilon <= 0.0:
            raise ValueError("tau, eta_max, and epsilon must be positive")
        if self.delta_euc is not None and self.delta_euc <= 0.0:
            raise ValueError("delta_euc must be positive when enabled")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.t_cap < 1:
            raise ValueError("t_cap must be >= 1")


@dataclass
class TrajectoryRecord:
    """Per-step scalars of one realized trajectory."""

    probs: List[list] = field(default_factory=list)
    loss: List[float] = field(default_factory=list)
    eta: List[float] = field(default_factory=list)
    active_constraint: List[str] = field(default_factory=list)
    fisher_norm_sq: List[Optional[float]] = field(default_factory=list)
    euclid_step: List[float] = field(default_factory=list)
    tracking_error: List[float] = field(default_factory=list)
    step_kl: List[float] = field(default_factory=list)
    cg_iterations: List[Optional[int]] = field(default_factory=list)
    inputs: Optional[List[Tensor]] = None

    def to_dict(self) -> dict:
        return {
            "probs": self.probs,
            "loss": self.loss,
            "eta": self.eta,
            "active_constraint": self.active_constraint,
            "fisher_norm_sq": self.fisher_norm_sq,
            "euclid_step": self.euclid_step,
            "tracking_error": self.tracking_error,
            "step_kl": self.step_kl,
            "cg_iterations": self.cg_iterations,
        }


@dataclass
class AttributionResult:
    attribution: Tensor
    completeness_residual: float
    endpoint_kl: Optional[float]
    endpoint_digest: str
    trajectory: Optional[TrajectoryRecord]
    config: dict
    degenerate: bool = False
    score_start: float = 0.0
    score_end: float = 0.0
    steps: int = 0
    metric_apply_calls: int = 0


def alignment_loss(p: np.ndarray, s_k: np.ndarray) -> float:
    """Spherical alignment loss 1 - <sqrt(p), s_k>."""
    return 1.0 - float(np.dot(np.sqrt(np.clip(p, 0.0, None)), s_k))


def alignment_grad(m: ModelGraph, x: Tensor, s_k: np.ndarray,
                   probs: Optional[np.ndarray] = None) -> Tensor:
    """Input gradient of the alignment loss, softmax/sqrt chain applied analytically.

    d<sqrt(p), s>/dz_j = (s_j sqrt(p_j) - p_j <s, sqrt(p)>) / 2, then one VJP.
    """
    if probs is None:
        probs = m.forward(x).probs.data
    psi = np.sqrt(probs)
    u = -0.5 * (s_k * psi - probs * float(np.dot(s_k, psi)))
    return m.vjp(x, Tensor((m.class_count,), u))


def step_size(cfg: FringeConfig, n_k_sq: float, v_norm2: float):
    """Trust-region step: min of eta_max, KL bound, Euclidean cap.

    Ties resolve in the order eta_max, kl, euclidean.
    """
    eta_kl = math.sqrt(2.0 * cfg.tau / (n_k_sq + cfg.epsilon))
    if cfg.delta_euc is not None:
        eta_euc = cfg.delta_euc / (v_norm2 + cfg.epsilon)
    else:
        eta_euc = math.inf
    eta = min(cfg.eta_max, eta_kl, eta_euc)
    if eta == cfg.eta_max:
        active = "eta_max"
    elif eta == eta_kl:
        active = "kl"
    else:
        active = "euclidean"
    return eta, active


def _effective_solve_config(cfg: FringeConfig, op: Optional[SmoothingOperator]) -> SolveConfig:
    scfg = cfg.solve
    if cfg.variant == "unregularized_fr":
        scfg = replace(scfg, gamma_step=0.0, gamma_prior=0.0)
    elif cfg.variant == "gamma_step_only":
        scfg = replace(scfg, gamma_prior=0.0)
    elif cfg.variant == "gamma_prior_only":
        scfg = replace(scfg, gamma_step=0.0)
    if op is None and (scfg.gamma_step > 0.0 or scfg.gamma_prior > 0.0):
        log.warning("non-grid input: smoothing coefficients forced to 0")
        scfg = replace(scfg, gamma_step=0.0, gamma_prior=0.0)
    return scfg


def _digest(x: Tensor) -> str:
    return hashlib.sha256(x.data.tobytes()).hexdigest()[:16]


def run_fringe(m: ModelGraph, x: Tensor, t: int, cfg: FringeConfig) -> AttributionResult:
    """Full trajectory: waypoints, tracked steps, trapezoidal accumulation."""
    if not 0 <= t < m.class_count:
        raise ValueError(f"class index {t} out of range")
    state0 = m.forward(x)
    p0 = state0.probs.data
    q_star = np.full(m.class_count, 1.0 / m.class_count)
    config_echo = _config_dict(cfg)

    # acos cannot resolve angles below ~1e-8 near cosine 1, so also test
    # the distributions directly.
    if (geometry.sphere_angle(p0, q_star) < EPS_THETA
            or float(np.max(np.abs(p0 - q_star))) < 1e-12):
        # Prediction already at maximum entropy: nothing to attribute.
        return AttributionResult(
            attribution=Tensor.zeros(x.shape),
            completeness_residual=0.0,
            endpoint_kl=kl_divergence(p0, q_star),
            endpoint_digest=_digest(x),
            trajectory=TrajectoryRecord(),
            config=config_echo,
            degenerate=True,
            score_start=m.score(x, t, cfg.score_target),
            score_end=m.score(x, t, cfg.score_target),
            steps=0,
        )

    T = sync_steps(p0, q_star, cfg.tau, cfg.t_cap)
    path = build_waypoints(p0, q_star, T)
    op = SmoothingOperator.from_shape(x.shape)
    scfg = _effective_solve_config(cfg, op)
    metric_free = cfg.variant in _METRIC_FREE

    traj = TrajectoryRecord(inputs=[] if cfg.record_inputs else None)
    a_path = np.zeros(x.size)
    x_k = x
    ctx = PullbackContext(m, x_k, state0)
    grad_k = m.grad_score(x_k, t, cfg.score_target)
    warm: Optional[Tensor] = None
    metric_calls = 0

    for k in range(T):
        s_next = path.sqrt_waypoints[k + 1]  # track the next waypoint
        p_k = ctx.state.probs.data
        loss_k = alignment_loss(p_k, s_next)
        g_k = alignment_grad(m, x_k, s_next, probs=p_k)

        cg_iters: Optional[int] = None
        if cfg.variant == "euclidean_tracking":
            v_k = g_k
        elif cfg.variant == "maxent_prior_control":
            rhs = g_k.data
            if scfg.gamma_prior > 0.0:
                rhs = rhs + scfg.gamma_prior * biharmonic_apply(op, x_k.data)
            v_k = Tensor(x.shape, rhs)
        else:
            rhs = g_k.data
            if scfg.gamma_prior > 0.0:
                rhs = rhs + scfg.gamma_prior * biharmonic_apply(op, x_k.data)
            res = pcg_solve(ctx, op, scfg, Tensor(x.shape, rhs), warm_start=warm)
            v_k = res.v
            warm = v_k
            cg_iters = res.iterations_used

        if metric_free:
            n_k_sq = None
            eta_k, active = cfg.eta_max, "eta_max"
        else:
            n_k_sq = metric_norm_sq(ctx, v_k)
            eta_k, active = step_size(cfg, n_k_sq, float(np.linalg.norm(v_k.data)))

        x_next_arr = x_k.data - eta_k * v_k.data
        if not np.all(np.isfinite(x_next_arr)):
            raise NonFiniteError(f"non-finite iterate at step {k}")
        x_next = Tensor(x.shape, x_next_arr)

        grad_next = m.grad_score(x_next, t, cfg.score_target)
        a_path += 0.5 * (grad_k.data + grad_next.data) * (x_next.data - x_k.data)

        metric_calls += ctx.metric_apply_calls
        ctx_next = PullbackContext(m, x_next)
        p_next = ctx_next.state.probs.data

        traj.probs.append(p_next.tolist())
        traj.loss.append(loss_k)
        traj.eta.append(eta_k)
        traj.active_constraint.append(active)
        traj.fisher_norm_sq.append(n_k_sq)
        traj.euclid_step.append(float(np.linalg.norm(x_next.data - x_k.data)))
        traj.tracking_error.append(fr_distance(p_next, path.simplex_waypoints[k + 1]))
        traj.step_kl.append(kl_divergence(p_next, p_k))
        traj.cg_iterations.append(cg_iters)
        if traj.inputs is not None:
            traj.inputs.append(x_next)

        x_k, ctx, grad_k = x_next, ctx_next, grad_next

    metric_calls += ctx.metric_apply_calls
    attribution = Tensor(x.shape, -a_path)
    s0 = m.score(x, t, cfg.score_target)
    s_end = m.score(x_k, t, cfg.score_target)
    delta = s0 - s_end
    eps_comp = abs(float(np.sum(attribution.data)) - delta) / (abs(delta) + cfg.epsilon)
    return AttributionResult(
        attribution=attribution,
        completeness_residual=eps_comp,
        endpoint_kl=kl_divergence(ctx.state.probs.data, q_star),
        endpoint_digest=_digest(x_k),
        trajectory=traj,
        config=config_echo,
        score_start=s0,
        score_end=s_end,
        steps=T,
        metric_apply_calls=metric_calls,
    )


def run_ig_reference(m: ModelGraph, x: Tensor, t: int, baseline: Tensor,
                     steps: int, score_target: str = "logit",
                     epsilon: float = 1e-8) -> AttributionResult:
    """Trapezoidal integrated gradients on the straight line baseline -> input."""
    if baseline.shape != x.shape:
        raise ShapeMismatchError(
            f"baseline shape {baseline.shape} != input shape {x.shape}"
        )
    if steps < 1:
        raise ValueError("steps must be >= 1")
    delta_x = (x.data - baseline.data) / steps
    a = np.zeros(x.size)
    prev = m.grad_score(baseline, t, score_target)
    for j in range(1, steps + 1):
        xj = Tensor(x.shape, baseline.data + j * (x.data - baseline.data) / steps)
        cur = m.grad_score(xj, t, score_target)
        a += 0.5 * (prev.data + cur.data) * delta_x
        prev = cur
    s_in = m.score(x, t, score_target)
    s_base = m.score(baseline, t, score_target)
    delta = s_in - s_base
    eps_comp = abs(float(np.sum(a)) - delta) / (abs(delta) + epsilon)
    return AttributionResult(
        attribution=Tensor(x.shape, a),
        completeness_residual=eps_comp,
        endpoint_kl=None,
        endpoint_digest=_digest(baseline),
        trajectory=None,
        config={"method": "ig", "steps": steps, "score_target": score_target},
        score_start=s_in,
        score_end=s_base,
        steps=steps,
    )


def _config_dict(cfg: FringeConfig) -> dict:
    return {
        "tau": cfg.tau,
        "eta_max": cfg.eta_max,
        "delta_euc": cfg.delta_euc,
        "variant": cfg.variant,
        "epsilon": cfg.epsilon,
        "score_target": cfg.score_target,
        "t_cap": cfg.t_cap,
        "solve": {
            "lam": cfg.solve.lam,
            "gamma_step": cfg.solve.gamma_step,
            "gamma_prior": cfg.solve.gamma_prior,
            "max_cg_iters": cfg.solve.max_cg_iters,
            "cg_tol": cfg.solve.cg_tol,
            "preconditioner": cfg.solve.preconditioner,
            "blur_sigma": cfg.solve.blur_sigma,
        },
    }
