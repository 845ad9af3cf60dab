"""Evaluation metrics: curves, AUC, MAS, infidelity, sparseness, tuning."""

import math

import numpy as np
import pytest

from conftest import make_conv_model, make_input, make_linear
from fringe import Tensor, gradient_attribution
from fringe.metrics import (
    PerturbationSchedule,
    auc,
    blur_reference,
    density_response,
    evaluate,
    infidelity,
    mas,
    max_sensitivity,
    normalize_curve,
    perturbation_curve,
    reduce_saliency,
    reference_kernel_size,
    sparseness,
    tuning_score,
)
from fringe.tensor import ShapeMismatchError


def grid_case(seed=60):
    m = make_conv_model(seed)
    x = make_input(seed, (1, 8, 8))
    t = int(np.argmax(m.forward(x).probs.data))
    a = gradient_attribution(m, x, t)
    return m, x, t, a


def test_reduce_saliency_channel_max():
    a = Tensor((2, 2, 2), [1.0, -5.0, 2.0, 0.0,
                           -3.0, 1.0, 0.0, 4.0])
    sal = reduce_saliency(a)
    assert np.array_equal(sal.values, [[3.0, 5.0], [2.0, 4.0]])
    assert list(sal.ranking) == [1, 3, 0, 2]


def test_ranking_tie_break_is_positional():
    a = Tensor((2, 2), [1.0, 1.0, 1.0, 1.0])
    assert list(reduce_saliency(a).ranking) == [0, 1, 2, 3]


def test_saliency_shape_validation():
    with pytest.raises(ShapeMismatchError):
        reduce_saliency(Tensor((8,), np.zeros(8)))


def test_reference_kernel_size():
    assert reference_kernel_size(8, 8) == 3
    assert reference_kernel_size(32, 32) == 3
    assert reference_kernel_size(100, 100) == 11
    assert reference_kernel_size(224, 224) == 23
    assert reference_kernel_size(110, 224) == 11


def test_blur_reference_preserves_constants():
    x = Tensor((1, 8, 8), np.full(64, 0.7))
    for kind in ("avgpool_blur", "gaussian_blur"):
        assert np.allclose(blur_reference(x, kind).data, 0.7, atol=1e-12)
    with pytest.raises(ValueError):
        blur_reference(x, "median")


def test_perturbation_curve_endpoints():
    m, x, t, a = grid_case()
    sal = reduce_saliency(a)
    p_orig = float(m.forward(x).probs.data[t])
    p_blur = float(m.forward(blur_reference(x)).probs.data[t])
    n = 10
    ins = perturbation_curve(m, x, t, sal, PerturbationSchedule("insertion", n))
    dele = perturbation_curve(m, x, t, sal, PerturbationSchedule("deletion", n))
    assert ins.size == n + 1 and dele.size == n + 1
    assert abs(ins[0] - p_blur) <= 1e-12
    assert abs(ins[-1] - p_orig) <= 1e-12
    assert abs(dele[0] - p_orig) <= 1e-12
    assert abs(dele[-1] - p_blur) <= 1e-12


def test_schedule_validation():
    with pytest.raises(ValueError):
        PerturbationSchedule("sideways")
    with pytest.raises(ValueError):
        PerturbationSchedule("insertion", step_count=0)


def test_auc_known_curves():
    assert abs(auc(np.ones(11)) - 1.0) <= 1e-12
    assert abs(auc(np.linspace(0.0, 1.0, 11)) - 0.5) <= 1e-12
    with pytest.raises(ValueError):
        auc([0.5])


def test_normalize_curve_affine_and_clipped():
    curve = np.array([0.2, 0.5, 0.8, 1.1])
    out = normalize_curve(curve, p_orig=1.0, p_blur=0.2)
    assert np.allclose(out, [0.0, 0.375, 0.75, 1.0], atol=1e-12)
    # degenerate span falls back to eps denominator, still clipped
    flat = normalize_curve(np.array([0.4, 0.6]), 0.5, 0.5)
    assert np.all((flat >= 0.0) & (flat <= 1.0))


def test_density_response_contract():
    _, _, _, a = grid_case()
    sal = reduce_saliency(a)
    dr = density_response(a, sal, 10)
    assert dr[0] == 0.0
    assert dr.size == 11
    assert np.all(np.diff(dr) >= -1e-15)
    assert abs(dr[-1] - 1.0) <= 1e-6


def test_density_response_zero_attribution():
    a = Tensor((1, 4, 4), np.zeros(16))
    dr = density_response(a, reduce_saliency(a), 4)
    assert np.array_equal(dr, np.zeros(5))


def test_mas_inequality_contracts():
    m, x, t, a = grid_case()
    n = 10
    sal = reduce_saliency(a)
    dr = density_response(a, sal, n)
    p_orig = float(m.forward(x).probs.data[t])
    p_blur = float(m.forward(blur_reference(x, "gaussian_blur", 15, 3.0)).probs.data[t])
    mas_ins, mas_del = mas(m, x, t, a, n_steps=n)

    for direction, score in (("insertion", mas_ins), ("deletion", mas_del)):
        sched = PerturbationSchedule(direction, n, "gaussian_blur", 15, 3.0)
        mr = normalize_curve(perturbation_curve(m, x, t, sal, sched),
                             p_orig, p_blur)
        ap = np.abs(mr - dr)
        assert np.all(ap >= 0.0)
        if direction == "insertion":
            # penalty subtracts: score never exceeds the mean model response
            assert score <= float(np.mean(mr)) + 1e-12
            assert abs(score - (np.mean(mr) - np.mean(ap))) <= 1e-12
        else:
            assert score >= float(np.mean(mr)) - 1e-12
            assert abs(score - (np.mean(mr) + np.mean(ap))) <= 1e-12


def test_infidelity_zero_on_linear_model_with_exact_gradient():
    m = make_linear(61)
    x = make_input(61, (8,))
    a = gradient_attribution(m, x, 0)
    assert infidelity(m, x, 0, a, samples=20, seed=3) <= 1e-24


def test_infidelity_shape_checked():
    m = make_linear(62)
    x = make_input(62, (8,))
    with pytest.raises(ShapeMismatchError):
        infidelity(m, x, 0, Tensor((4,), np.ones(4)))


def test_sparseness_one_hot():
    assert abs(sparseness(Tensor((4,), [0.0, 0.0, 1.0, 0.0])) - 0.75) <= 1e-12


def test_sparseness_scale_invariance():
    rng = np.random.default_rng(9)
    base = rng.normal(size=32)
    ref = sparseness(Tensor((32,), base))
    for c in (0.1, 1.0, 10.0):
        assert abs(sparseness(Tensor((32,), c * base)) - ref) <= 1e-7


def test_sparseness_extremes():
    assert sparseness(Tensor((8,), np.zeros(8))) == 0.0
    assert sparseness(Tensor((8,), np.full(8, 2.0))) <= 1e-8


def test_max_sensitivity_zero_for_constant_attribution():
    m = make_linear(63)
    x = make_input(63, (8,))
    method = lambda xx: gradient_attribution(m, xx, 0)
    assert max_sensitivity(method, x, m_samples=5) <= 1e-12


def test_tuning_score_examples():
    assert abs(tuning_score(1.0, 0.0, 0.0) - 1.0) <= 1e-5
    # worse deletion AUC lowers the score
    assert tuning_score(0.8, 0.5, 0.1) < tuning_score(0.8, 0.2, 0.1)
    # higher infidelity lowers the score
    assert tuning_score(0.8, 0.2, 1.0) < tuning_score(0.8, 0.2, 0.0)


def test_evaluate_report_round_trip():
    m, x, t, a = grid_case(64)
    report = evaluate(m, x, t, a, n_steps=5)
    d = report.to_dict()
    assert len(d["ins_curve"]) == 6
    assert len(d["del_curve"]) == 6
    for key in ("ins_auc_raw", "del_auc_raw", "ins_auc", "del_auc",
                "mas_ins", "mas_del", "infidelity", "sparseness"):
        assert math.isfinite(d[key])
    assert 0.0 <= d["ins_auc"] <= 1.0
    assert 0.0 <= d["del_auc"] <= 1.0
    assert 0.0 <= d["sparseness"] <= 1.0


def test_evaluate_all_zero_attribution():
    m, x, t, _ = grid_case(65)
    report = evaluate(m, x, t, Tensor(x.shape, np.zeros(x.size)), n_steps=5)
    assert report.sparseness == 0.0
