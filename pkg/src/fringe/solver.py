"""Regularized linear solves (G + lambda*I + gamma_step*L^T L) v = rhs.

Uses flexible preconditioned conjugate gradients with truncation and warm
starting.  L is a 5-point discrete Laplacian per channel with replicate
boundary handling (constants stay in the kernel), so L^T L is a discrete
biharmonic operator.  The "sobolev_blur" preconditioner approximates the
inverse of the smoothed system by Gaussian blurring followed by 1/lambda
scaling; since the blur is only an approximate (and not exactly symmetric)
inverse, it is used inside a flexible-CG recurrence and the solver keeps
the best iterate seen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .pullback import PullbackContext, metric_apply
from .tensor import NonFiniteError, ShapeMismatchError, Tensor


@dataclass(frozen=True)
class SmoothingOperator:
    """5-point Laplacian stencil over a (channels, H, W) grid."""

    channels: int
    height: int
    width: int

    @classmethod
    def from_shape(cls, shape) -> Optional["SmoothingOperator"]:
        """Grid operator for a tensor shape, or None for non-grid inputs."""
        shape = tuple(shape)
        if len(shape) == 2:
            return cls(1, shape[0], shape[1])
        if len(shape) == 3:
            return cls(shape[0], shape[1], shape[2])
        return None

    @property
    def grid_shape(self) -> tuple:
        return (self.channels, self.height, self.width)

    def _check(self, u: np.ndarray) -> np.ndarray:
        if u.size != self.channels * self.height * self.width:
            raise ShapeMismatchError(
                f"field of size {u.size} does not match grid {self.grid_shape}"
            )
        return u.reshape(self.grid_shape)


def _laplacian_2d(u: np.ndarray) -> np.ndarray:
    p = np.pad(u, 1, mode="edge")
    return 4.0 * u - p[:-2, 1:-1] - p[2:, 1:-1] - p[1:-1, :-2] - p[1:-1, 2:]


def _laplacian_2d_adjoint(w: np.ndarray) -> np.ndarray:
    # Adjoint of the replicate-padded stencil: transpose each clamped
    # neighbor shift separately.
    out = 4.0 * w.copy()
    # up neighbor y[i,j] = u[max(i-1,0), j]
    out[:-1, :] -= w[1:, :]
    out[0, :] -= w[0, :]
    # down neighbor y[i,j] = u[min(i+1,H-1), j]
    out[1:, :] -= w[:-1, :]
    out[-1, :] -= w[-1, :]
    # left
    out[:, :-1] -= w[:, 1:]
    out[:, 0] -= w[:, 0]
    # right
    out[:, 1:] -= w[:, :-1]
    out[:, -1] -= w[:, -1]
    return out


def laplacian_apply(op: SmoothingOperator, u: np.ndarray) -> np.ndarray:
    """L u, per channel, flat in / flat out."""
    grid = op._check(np.asarray(u, dtype=np.float64))
    out = np.stack([_laplacian_2d(grid[c]) for c in range(op.channels)])
    return out.reshape(-1)


def laplacian_adjoint_apply(op: SmoothingOperator, w: np.ndarray) -> np.ndarray:
    """L^T w, per channel, flat in / flat out."""
    grid = op._check(np.asarray(w, dtype=np.float64))
    out = np.stack([_laplacian_2d_adjoint(grid[c]) for c in range(op.channels)])
    return out.reshape(-1)


def biharmonic_apply(op: SmoothingOperator, u: np.ndarray) -> np.ndarray:
    """L^T (L u)."""
    return laplacian_adjoint_apply(op, laplacian_apply(op, u))


def gaussian_blur(op: SmoothingOperator, u: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, truncated at radius ceil(3*sigma), replicate pad."""
    radius = max(1, int(math.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (xs / sigma) ** 2)
    kernel /= kernel.sum()
    grid = op._check(np.asarray(u, dtype=np.float64)).copy()
    for c in range(op.channels):
        plane = np.pad(grid[c], ((radius, radius), (0, 0)), mode="edge")
        plane = np.apply_along_axis(lambda col: np.convolve(col, kernel, "valid"), 0, plane)
        plane = np.pad(plane, ((0, 0), (radius, radius)), mode="edge")
        grid[c] = np.apply_along_axis(lambda row: np.convolve(row, kernel, "valid"), 1, plane)
    return grid.reshape(-1)


@dataclass(frozen=True)
class SolveConfig:
    lam: float = 1e-6
    gamma_step: float = 0.0
    gamma_prior: float = 0.0
    max_cg_iters: int = 20
    cg_tol: float = 1e-4
    preconditioner: str = "diagonal"  # none | diagonal | sobolev_blur
    blur_sigma: float = 1.0

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("lam must be positive (system must be PD)")
        if self.gamma_step < 0.0 or self.gamma_prior < 0.0:
            raise ValueError("gamma coefficients must be nonnegative")
        if self.max_cg_iters < 1:
            raise ValueError("max_cg_iters must be >= 1")
        if self.preconditioner not in ("none", "diagonal", "sobolev_blur"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveResult:
    v: Tensor
    iterations_used: int
    final_residual_norm: float
    converged: bool


def system_apply(ctx: PullbackContext, op: Optional[SmoothingOperator],
                 cfg: SolveConfig, v: Tensor) -> Tensor:
    """G(x) v + lam*v + gamma_step * L^T L v."""
    out = metric_apply(ctx, v).data + cfg.lam * v.data
    if cfg.gamma_step > 0.0:
        if op is None:
            raise ValueError("gamma_step > 0 requires a grid smoothing operator")
        out = out + cfg.gamma_step * biharmonic_apply(op, v.data)
    return Tensor(v.shape, out)


def _precondition(op: Optional[SmoothingOperator], cfg: SolveConfig,
                  r: np.ndarray) -> np.ndarray:
    if cfg.preconditioner == "none":
        return r
    if cfg.preconditioner == "sobolev_blur" and op is not None:
        return gaussian_blur(op, r, cfg.blur_sigma) / cfg.lam
    return r / cfg.lam


def pcg_solve(ctx: PullbackContext, op: Optional[SmoothingOperator],
              cfg: SolveConfig, rhs: Tensor,
              warm_start: Optional[Tensor] = None) -> SolveResult:
    """Flexible PCG; truncated results are returned, not raised.

    Postcondition: either the relative residual is below cfg.cg_tol
    (converged=True) or the iteration budget was exhausted and the best
    iterate seen is returned with converged=False.
    """
    b = rhs.data
    b_norm = float(np.linalg.norm(b))
    shape = rhs.shape
    if b_norm == 0.0:
        return SolveResult(Tensor.zeros(shape), 0, 0.0, True)

    apply_a = lambda vec: system_apply(ctx, op, cfg, Tensor(shape, vec)).data

    if warm_start is not None:
        x = warm_start.data.copy()
        r = b - apply_a(x)
    else:
        x = np.zeros_like(b)
        r = b.copy()

    tol = cfg.cg_tol * b_norm
    r_norm = float(np.linalg.norm(r))
    best_x, best_norm = x.copy(), r_norm
    if r_norm <= tol:
        return SolveResult(Tensor(shape, x), 0, r_norm, True)

    z = _precondition(op, cfg, r)
    d = z.copy()
    rz = float(np.dot(r, z))
    iters = 0
    for _ in range(cfg.max_cg_iters):
        ad = apply_a(d)
        dad = float(np.dot(d, ad))
        if not np.isfinite(dad):
            raise NonFiniteError("non-finite curvature during PCG solve")
        if dad <= 0.0:
            break  # numerically lost positive-definiteness along d
        alpha = rz / dad
        x = x + alpha * d
        r_new = r - alpha * ad
        iters += 1
        if not np.all(np.isfinite(r_new)):
            raise NonFiniteError("non-finite residual during PCG solve")
        r_norm = float(np.linalg.norm(r_new))
        if r_norm < best_norm:
            best_x, best_norm = x.copy(), r_norm
        if r_norm <= tol:
            return SolveResult(Tensor(shape, x), iters, r_norm, True)
        z_new = _precondition(op, cfg, r_new)
        # Flexible (Polak-Ribiere style) beta tolerates inexact preconditioners.
        beta = float(np.dot(z_new, r_new - r)) / rz
        d = z_new + beta * d
        r, z = r_new, z_new
        rz = float(np.dot(r, z))
        if rz <= 0.0:
            break
    return SolveResult(Tensor(shape, best_x), iters, best_norm, best_norm <= tol)
