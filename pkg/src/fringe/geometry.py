"""Fisher-Rao geometry on the categorical probability simplex.

Geodesics are great-circle arcs in square-root coordinates: the map
psi(p) = sqrt(p) sends the simplex onto the positive orthant of the unit
sphere, where spherical linear interpolation gives constant-speed
shortest paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

import numpy as np

# Below this angle (radians) two distributions are treated as identical
# and the geodesic degenerates to a constant path.
EPS_THETA = 1e-9


def _as_simplex(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if np.any(p < -1e-12):
        raise ValueError("simplex point has negative entries")
    if abs(float(np.sum(p)) - 1.0) > 1e-8:
        raise ValueError(f"simplex point sums to {np.sum(p)}, expected 1")
    return np.clip(p, 0.0, None)


def sphere_angle(p0, p1) -> float:
    """Angle between sqrt(p0) and sqrt(p1) on the unit sphere."""
    c = float(np.dot(np.sqrt(_as_simplex(p0)), np.sqrt(_as_simplex(p1))))
    return math.acos(min(1.0, max(-1.0, c)))


def fr_distance(p0, p1) -> float:
    """Fisher-Rao distance 2*arccos(<sqrt(p0), sqrt(p1)>)."""
    return 2.0 * sphere_angle(p0, p1)


def slerp(p0, p1, alpha: float) -> np.ndarray:
    """Spherical interpolation between sqrt(p0) and sqrt(p1); unit norm.

    Degenerate geodesics (angle below EPS_THETA) return sqrt(p0) for all
    alpha, the limit of the interpolation formula.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    psi0 = np.sqrt(_as_simplex(p0))
    psi1 = np.sqrt(_as_simplex(p1))
    theta = math.acos(min(1.0, max(-1.0, float(np.dot(psi0, psi1)))))
    if theta < EPS_THETA:
        return psi0
    s = (math.sin((1.0 - alpha) * theta) * psi0 + math.sin(alpha * theta) * psi1)
    s /= math.sin(theta)
    return s / np.linalg.norm(s)


def sync_steps(p0, q_star, tau: float, t_cap: int = 512) -> int:
    """Waypoint count T = ceil(d_FR / sqrt(2*tau)), clamped to [1, t_cap]."""
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    d = fr_distance(p0, q_star)
    if d < EPS_THETA:
        return 1
    t = math.ceil(d / math.sqrt(2.0 * tau))
    return max(1, min(int(t), int(t_cap)))


@dataclass(frozen=True)
class SimplexPath:
    """Discretized Fisher-Rao geodesic: sqrt waypoints and simplex waypoints."""

    sqrt_waypoints: List[np.ndarray]
    simplex_waypoints: List[np.ndarray]
    T: int
    theta: float
    d_total: float


def build_waypoints(p0, q_star, T: int) -> SimplexPath:
    """Uniform waypoints s_k = slerp(p0, q*, k/T), q_k = s_k * s_k."""
    if T < 1:
        raise ValueError("T must be >= 1")
    p0 = _as_simplex(p0)
    q_star = _as_simplex(q_star)
    theta = sphere_angle(p0, q_star)
    sqrt_wps = [slerp(p0, q_star, k / T) for k in range(T + 1)]
    simplex_wps = [s * s for s in sqrt_wps]
    return SimplexPath(
        sqrt_waypoints=sqrt_wps,
        simplex_waypoints=simplex_wps,
        T=T,
        theta=theta,
        d_total=2.0 * theta,
    )


def kl_divergence(p, q) -> float:
    """KL(p || q) for categorical distributions; 0*log(0/q) taken as 0."""
    p = _as_simplex(p)
    q = _as_simplex(q)
    mask = p > 0.0
    if np.any(q[mask] <= 0.0):
        return math.inf
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
