"""Attribution evaluation metrics.

Covers spatial saliency reduction, blur-based insertion/deletion AUC (raw
and normalized), magnitude-aligned scoring (MAS), infidelity, Gini
sparseness, max sensitivity, and the harmonic-mean tuning score.

Rank ties break by ascending position index, so every ranking is
deterministic and test-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .model import ModelGraph
from .tensor import ShapeMismatchError, Tensor

EPS = 1e-8


# -- saliency reduction ---------------------------------------------------

@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray        # (H, W), nonnegative
    ranking: np.ndarray       # flat positions, descending saliency


def _spatial_view(a: Tensor) -> np.ndarray:
    """Attribution as (C, H, W); 2-D input treated as single channel."""
    arr = a.array
    if arr.ndim == 2:
        return arr[None, :, :]
    if arr.ndim == 3:
        return arr
    raise ShapeMismatchError(f"expected (C,H,W) or (H,W) attribution, got {a.shape}")


def reduce_saliency(a: Tensor) -> SaliencyMap:
    """Channel-max of absolute attribution, with a deterministic ranking."""
    s = np.max(np.abs(_spatial_view(a)), axis=0)
    ranking = np.argsort(-s.ravel(), kind="stable")
    return SaliencyMap(values=s, ranking=ranking)


# -- perturbation references ----------------------------------------------

def _odd_up(k: int) -> int:
    return k if k % 2 == 1 else k + 1


def reference_kernel_size(h: int, w: int) -> int:
    """k = max(3, odd(floor(min(H, W) / 10))), odd() rounding up."""
    return max(3, _odd_up(min(h, w) // 10))


def _box_blur_2d(plane: np.ndarray, k: int) -> np.ndarray:
    r = k // 2
    p = np.pad(plane, r, mode="edge")
    kernel = np.full(k, 1.0 / k)
    p = np.apply_along_axis(lambda col: np.convolve(col, kernel, "valid"), 0, p)
    return np.apply_along_axis(lambda row: np.convolve(row, kernel, "valid"), 1, p)


def _gaussian_blur_2d(plane: np.ndarray, size: int, sigma: float) -> np.ndarray:
    r = size // 2
    xs = np.arange(-r, r + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (xs / sigma) ** 2)
    kernel /= kernel.sum()
    p = np.pad(plane, r, mode="edge")
    p = np.apply_along_axis(lambda col: np.convolve(col, kernel, "valid"), 0, p)
    return np.apply_along_axis(lambda row: np.convolve(row, kernel, "valid"), 1, p)


def blur_reference(x: Tensor, kind: str = "avgpool_blur",
                   kernel_size: Optional[int] = None,
                   sigma: float = 3.0) -> Tensor:
    """Blurred baseline image used by the perturbation schedules."""
    img = _spatial_view(x)
    h, w = img.shape[1], img.shape[2]
    if kind == "avgpool_blur":
        k = kernel_size if kernel_size is not None else reference_kernel_size(h, w)
        out = np.stack([_box_blur_2d(img[c], k) for c in range(img.shape[0])])
    elif kind == "gaussian_blur":
        k = kernel_size if kernel_size is not None else 15
        out = np.stack([_gaussian_blur_2d(img[c], k, sigma) for c in range(img.shape[0])])
    else:
        raise ValueError(f"unknown baseline kind {kind!r}")
    return Tensor(x.shape, out.reshape(-1))


@dataclass(frozen=True)
class PerturbationSchedule:
    direction: str                       # insertion | deletion
    step_count: int = 50
    baseline_kind: str = "avgpool_blur"
    kernel_size: Optional[int] = None
    sigma: float = 3.0

    def __post_init__(self):
        if self.direction not in ("insertion", "deletion"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.step_count < 1:
            raise ValueError("step_count must be >= 1")


def _rank_chunks(ranking: np.ndarray, n_steps: int) -> List[np.ndarray]:
    return [c for c in np.array_split(ranking, n_steps)]


def perturbation_curve(m: ModelGraph, x: Tensor, t: int, sal: SaliencyMap,
                       sched: PerturbationSchedule) -> np.ndarray:
    """Target-class confidence at each perturbation step, endpoints included."""
    img = _spatial_view(x)
    blur = _spatial_view(blur_reference(x, sched.baseline_kind,
                                        sched.kernel_size, sched.sigma))
    n_pix = img.shape[1] * img.shape[2]
    if sal.ranking.size != n_pix:
        raise ShapeMismatchError("saliency ranking does not match image size")

    if sched.direction == "insertion":
        cur, src = blur.copy(), img
    else:
        cur, src = img.copy(), blur

    flat_cur = cur.reshape(img.shape[0], -1)
    flat_src = src.reshape(img.shape[0], -1)
    curve = [_confidence(m, x.shape, flat_cur, t)]
    for chunk in _rank_chunks(sal.ranking, sched.step_count):
        flat_cur[:, chunk] = flat_src[:, chunk]
        curve.append(_confidence(m, x.shape, flat_cur, t))
    return np.asarray(curve)


def _confidence(m: ModelGraph, shape, flat_img: np.ndarray, t: int) -> float:
    return float(m.forward(Tensor(shape, flat_img.reshape(-1))).probs.data[t])


def auc(curve) -> float:
    """Trapezoidal area under the curve over the unit abscissa."""
    curve = np.asarray(curve, dtype=np.float64)
    if curve.size < 2:
        raise ValueError("curve needs at least 2 points")
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(curve, np.linspace(0.0, 1.0, curve.size)))


def normalize_curve(curve, p_orig: float, p_blur: float, eps: float = EPS) -> np.ndarray:
    curve = np.asarray(curve, dtype=np.float64)
    return np.clip((curve - p_blur) / max(p_orig - p_blur, eps), 0.0, 1.0)


# -- MAS --------------------------------------------------------------------

def density_response(a: Tensor, sal: SaliencyMap, n_steps: int,
                     eps: float = EPS) -> np.ndarray:
    """Cumulative attribution-mass fraction along the ranking, steps 0..N."""
    mass = np.sum(np.abs(_spatial_view(a)), axis=0).ravel()
    total = float(mass.sum())
    dr = [0.0]
    acc = 0.0
    for chunk in _rank_chunks(sal.ranking, n_steps):
        acc += float(mass[chunk].sum())
        dr.append(acc / (total + eps))
    return np.asarray(dr)


def mas(m: ModelGraph, x: Tensor, t: int, a: Tensor,
        n_steps: int = 50, eps: float = EPS):
    """(mas_ins, mas_del) under the Gaussian-blur perturbation schedule."""
    sal = reduce_saliency(a)
    dr = density_response(a, sal, n_steps, eps)
    p_orig = float(m.forward(x).probs.data[t])
    blur = blur_reference(x, "gaussian_blur", 15, 3.0)
    p_blur = float(m.forward(blur).probs.data[t])

    scores = {}
    for direction in ("insertion", "deletion"):
        sched = PerturbationSchedule(direction=direction, step_count=n_steps,
                                     baseline_kind="gaussian_blur",
                                     kernel_size=15, sigma=3.0)
        mr = normalize_curve(perturbation_curve(m, x, t, sal, sched), p_orig, p_blur, eps)
        ap = np.abs(mr - dr)
        if direction == "insertion":
            scores["ins"] = float(np.mean(mr) - np.mean(ap))
        else:
            scores["del"] = float(np.mean(mr) + np.mean(ap))
    return scores["ins"], scores["del"]


# -- pointwise robustness metrics -------------------------------------------

def infidelity(m: ModelGraph, x: Tensor, t: int, a: Tensor,
               samples: int = 50, sigma: float = 0.02, seed: int = 0,
               score_target: str = "logit") -> float:
    """Mean squared gap between predicted and actual score change."""
    if a.shape != x.shape:
        raise ShapeMismatchError("attribution shape does not match input")
    rng = np.random.default_rng(seed)
    s_x = m.score(x, t, score_target)
    total = 0.0
    for _ in range(samples):
        delta = rng.normal(0.0, sigma, size=x.size)
        s_pert = m.score(Tensor(x.shape, x.data - delta), t, score_target)
        predicted = float(np.dot(delta, a.data))
        total += (predicted - (s_x - s_pert)) ** 2
    return total / samples


def sparseness(a: Tensor, eps: float = EPS) -> float:
    """Gini index of |A|; 0 diffuse, 1 concentrated."""
    vals = np.sort(np.abs(a.data))
    n = vals.size
    total = float(vals.sum())
    if total <= eps * eps:  # all-zero attribution is maximally diffuse
        return 0.0
    ranks = np.arange(1, n + 1, dtype=np.float64)
    g = 2.0 * float(np.dot(ranks, vals)) / (n * total) - (n + 1) / n
    return float(np.clip(g, 0.0, 1.0))


def max_sensitivity(attr_method: Callable[[Tensor], Tensor], x: Tensor,
                    r: float = 0.02, m_samples: int = 10, seed: int = 0,
                    eps: float = EPS) -> float:
    """Worst normalized attribution change under uniform [-r, r] perturbations."""
    rng = np.random.default_rng(seed)
    base = attr_method(x)
    base_hat = base.data / (float(np.linalg.norm(base.data)) + eps)
    worst = 0.0
    for _ in range(m_samples):
        delta = rng.uniform(-r, r, size=x.size)
        pert = attr_method(Tensor(x.shape, x.data + delta))
        pert_hat = pert.data / (float(np.linalg.norm(pert.data)) + eps)
        change = float(np.linalg.norm(base_hat - pert_hat))
        worst = max(worst, change / (float(np.linalg.norm(delta)) + eps))
    return worst


def tuning_score(ins_auc: float, del_auc: float, infid: float,
                 w_ins: float = 1.0, w_del: float = 1.0, w_fid: float = 0.5,
                 k: float = 2.0, eps: float = 1e-6) -> float:
    """Weighted harmonic mean of insertion, inverted deletion, and fidelity."""
    fid = math.exp(-k * infid)
    denom = (w_ins / (ins_auc + eps)
             + w_del / ((1.0 - del_auc) + eps)
             + w_fid / (fid + eps))
    return (w_ins + w_del + w_fid) / denom


# -- aggregated report -------------------------------------------------------

@dataclass
class MetricsReport:
    ins_auc_raw: float
    del_auc_raw: float
    ins_auc: float
    del_auc: float
    mas_ins: float
    mas_del: float
    infidelity: float
    sparseness: float
    max_sensitivity: Optional[float] = None
    ins_curve: List[float] = field(default_factory=list)
    del_curve: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ins_auc_raw": self.ins_auc_raw,
            "del_auc_raw": self.del_auc_raw,
            "ins_auc": self.ins_auc,
            "del_auc": self.del_auc,
            "mas_ins": self.mas_ins,
            "mas_del": self.mas_del,
            "infidelity": self.infidelity,
            "sparseness": self.sparseness,
            "max_sensitivity": self.max_sensitivity,
            "ins_curve": self.ins_curve,
            "del_curve": self.del_curve,
        }


def evaluate(m: ModelGraph, x: Tensor, t: int, a: Tensor,
             n_steps: int = 50, infid_seed: int = 0,
             score_target: str = "logit") -> MetricsReport:
    """Full metric suite for one (input, attribution) pair."""
    sal = reduce_saliency(a)
    p_orig = float(m.forward(x).probs.data[t])
    blur = blur_reference(x)
    p_blur = float(m.forward(blur).probs.data[t])

    ins = perturbation_curve(m, x, t, sal, PerturbationSchedule("insertion", n_steps))
    dele = perturbation_curve(m, x, t, sal, PerturbationSchedule("deletion", n_steps))
    mas_ins, mas_del = mas(m, x, t, a, n_steps=n_steps)
    return MetricsReport(
        ins_auc_raw=auc(ins),
        del_auc_raw=auc(dele),
        ins_auc=auc(normalize_curve(ins, p_orig, p_blur)),
        del_auc=auc(normalize_curve(dele, p_orig, p_blur)),
        mas_ins=mas_ins,
        mas_del=mas_del,
        infidelity=infidelity(m, x, t, a, seed=infid_seed, score_target=score_target),
        sparseness=sparseness(a),
        ins_curve=ins.tolist(),
        del_curve=dele.tolist(),
    )
