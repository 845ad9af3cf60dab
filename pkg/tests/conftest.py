"""Shared model builders and the fixed-seed toy suite used across tests."""

from pathlib import Path

import numpy as np
import pytest

from fringe import LayerSpec, ModelGraph, Tensor

DATA_DIR = Path(__file__).parent / "data"

# Seeds chosen once and frozen; they give well-conditioned toy classifiers
# whose completeness and endpoint-KL columns behave monotonically under
# the tau sweep used by the acceptance suite.
TOY_SEEDS = (0, 1, 2, 3, 5)


def make_mlp(seed, n=16, c=4, hidden=12, act="tanh", scale=1.5):
    """Two-layer MLP with activation in the middle, softmax on top."""
    rng = np.random.default_rng(seed)
    w1 = rng.normal(size=(hidden, n)) * scale / np.sqrt(n)
    b1 = rng.normal(size=hidden) * 0.1
    w2 = rng.normal(size=(c, hidden)) * scale / np.sqrt(hidden)
    b2 = rng.normal(size=c) * 0.1
    layers = [
        LayerSpec("dense", Tensor(w1.shape, w1.ravel()), Tensor((hidden,), b1)),
        LayerSpec("activation", activation=act),
        LayerSpec("dense", Tensor(w2.shape, w2.ravel()), Tensor((c,), b2)),
    ]
    return ModelGraph(layers, (n,), c)


def make_linear(seed, n=8, c=3, scale=1.0):
    """Single dense layer: scores are exactly linear in the input."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(c, n)) * scale / np.sqrt(n)
    b = rng.normal(size=c) * 0.1
    return ModelGraph(
        [LayerSpec("dense", Tensor(w.shape, w.ravel()), Tensor((c,), b))],
        (n,), c)


def make_conv_model(seed, channels=1, h=8, w=8, filters=3, k=3, c=4):
    """conv2d -> tanh -> dense classifier over a (channels, h, w) grid."""
    rng = np.random.default_rng(seed)
    wc = rng.normal(size=(filters, channels, k, k)) * 0.5
    bc = rng.normal(size=filters) * 0.1
    hh, ww = h - k + 1, w - k + 1
    wd = rng.normal(size=(c, filters * hh * ww)) * 1.5 / np.sqrt(filters * hh * ww)
    bd = rng.normal(size=c) * 0.1
    layers = [
        LayerSpec("conv2d", Tensor(wc.shape, wc.ravel()), Tensor((filters,), bc)),
        LayerSpec("activation", activation="tanh"),
        LayerSpec("dense", Tensor(wd.shape, wd.ravel()), Tensor((c,), bd)),
    ]
    return ModelGraph(layers, (channels, h, w), c)


def make_input(seed, shape=(16,)):
    rng = np.random.default_rng(100 + seed)
    return Tensor(shape, rng.normal(size=int(np.prod(shape))))


def toy_suite():
    """(model, input, target) triples for the frozen toy classifiers."""
    cases = []
    for seed in TOY_SEEDS:
        m = make_mlp(seed)
        x = make_input(seed)
        t = int(np.argmax(m.forward(x).probs.data))
        cases.append((m, x, t))
    return cases


@pytest.fixture(scope="session")
def suite():
    return toy_suite()


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR
