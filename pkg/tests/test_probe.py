import json
import math

import numpy as np
import pytest

from sciscope.errors import DegenerateData, DimensionMismatch, NonFiniteParams
from sciscope.probe import (
    HIDDEN_UNITS,
    MlpParams,
    TrainConfig,
    dataset_loss,
    glorot_init,
    gradient_check,
    load_params,
    mlp_forward,
    save_params,
    train_accuracy,
    train_mlp,
)


def zero_params(d: int, hidden: int = 4) -> MlpParams:
    return MlpParams(
        w1=np.zeros((hidden, d)), b1=np.zeros(hidden), w2=np.zeros(hidden), b2=0.0
    )


def make_blobs(n: int = 200, d: int = 16, seed: int = 0):
    """Two linearly separable Gaussian blobs as (vector, label) pairs."""
    rng = np.random.default_rng(seed)
    half = n // 2
    pos = rng.standard_normal((half, d)) * 0.5 + 2.0
    neg = rng.standard_normal((n - half, d)) * 0.5 - 2.0
    pairs = [(row, 1) for row in pos] + [(row, -1) for row in neg]
    return pairs


def test_zero_params_give_half():
    params = zero_params(d=4)
    for vec in (np.zeros(4), np.ones(4), np.array([3.0, -1.0, 0.5, 9.0])):
        assert mlp_forward(params, vec) == 0.5


def test_hand_computed_sigmoid_two():
    hidden = HIDDEN_UNITS
    w1 = np.zeros((hidden, 1))
    w1[0, 0] = 1.0
    w2 = np.zeros(hidden)
    w2[0] = 1.0
    params = MlpParams(w1=w1, b1=np.zeros(hidden), w2=w2, b2=0.0)
    p = mlp_forward(params, np.array([2.0]))
    assert p == pytest.approx(1.0 / (1.0 + math.exp(-2.0)), abs=1e-12)
    assert p == pytest.approx(0.8808, abs=1e-4)


def test_relu_zeroes_negative_preactivations():
    params = MlpParams(
        w1=np.full((4, 2), -1.0), b1=np.zeros(4), w2=np.ones(4), b2=-0.75
    )
    p = mlp_forward(params, np.array([5.0, 3.0]))  # all pre-activations negative
    assert p == pytest.approx(1.0 / (1.0 + math.exp(0.75)))


def test_forward_strictly_inside_unit_interval():
    params = MlpParams(
        w1=np.eye(1) * 1.0, b1=np.zeros(1), w2=np.array([1e6]), b2=0.0
    )
    assert 0.0 < mlp_forward(params, np.array([1.0])) < 1.0
    assert 0.0 < mlp_forward(params, np.array([-1.0])) < 1.0
    params_neg = MlpParams(
        w1=np.eye(1) * 1.0, b1=np.zeros(1), w2=np.array([1e6]), b2=-1e9
    )
    assert 0.0 < mlp_forward(params_neg, np.array([0.0])) < 1.0


def test_param_validation():
    with pytest.raises(NonFiniteParams):
        MlpParams(w1=np.array([[np.nan]]), b1=np.zeros(1), w2=np.zeros(1), b2=0.0)
    with pytest.raises(DimensionMismatch):
        MlpParams(w1=np.zeros((4, 2)), b1=np.zeros(3), w2=np.zeros(4), b2=0.0)
    with pytest.raises(DimensionMismatch):
        mlp_forward(zero_params(d=4), np.zeros(5))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)


def test_train_rejects_single_class():
    pairs = [(np.ones(4), 1), (np.zeros(4) + 2.0, 1)]
    with pytest.raises(DegenerateData):
        train_mlp(pairs, TrainConfig(seed=0))


def test_train_separable_blobs_reaches_95_accuracy():
    pairs = make_blobs()
    params = train_mlp(pairs, TrainConfig())  # the default recipe
    assert train_accuracy(params, pairs) >= 0.95


def test_train_deterministic_bit_identical():
    pairs = make_blobs(n=60, d=8, seed=3)
    config = TrainConfig(seed=11)
    a = train_mlp(pairs, config)
    b = train_mlp(pairs, config)
    assert np.array_equal(a.w1, b.w1)
    assert np.array_equal(a.b1, b.b1)
    assert np.array_equal(a.w2, b.w2)
    assert a.b2 == b.b2


def test_loss_decreases_from_init():
    pairs = make_blobs(n=100, d=8, seed=5)
    history: list[float] = []
    params = train_mlp(pairs, TrainConfig(seed=2), on_epoch=lambda e, loss: history.append(loss))
    assert len(history) == 10
    assert all(math.isfinite(loss) for loss in history)
    init_loss = dataset_loss(glorot_init(8, seed=2), pairs)
    assert dataset_loss(params, pairs) < init_loss
    assert history[-1] < history[0]


def test_gradient_check_small_params():
    rng = np.random.default_rng(4)
    params = MlpParams(
        w1=rng.standard_normal((6, 8)) * 0.3,
        b1=rng.standard_normal(6) * 0.1,
        w2=rng.standard_normal(6) * 0.3,
        b2=0.05,
    )
    e = rng.standard_normal(8)
    assert gradient_check(params, e, label=1) < 1e-4
    assert gradient_check(params, e, label=-1) < 1e-4


def test_gradient_check_saturated_region():
    # drive the output toward 1 with label 1: both gradients near zero
    params = MlpParams(
        w1=np.ones((2, 2)), b1=np.zeros(2), w2=np.array([20.0, 20.0]), b2=0.0
    )
    rel = gradient_check(params, np.array([1.0, 1.0]), label=1)
    assert rel < 1e-3


def test_gradient_check_skips_relu_kinks():
    # first hidden unit sits exactly on the kink (pre-activation 0)
    params = MlpParams(
        w1=np.array([[1.0, -1.0], [0.5, 0.5]]),
        b1=np.zeros(2),
        w2=np.array([1.0, 1.0]),
        b2=0.0,
    )
    e = np.array([1.0, 1.0])  # unit 0 pre-activation is exactly 0
    rel = gradient_check(params, e, label=1, h=1e-5)
    assert rel < 1e-4  # kink-crossing parameters were skipped, not compared


def test_params_json_round_trip(tmp_path):
    pairs = make_blobs(n=40, d=4, seed=9)
    config = TrainConfig(seed=1)
    params = train_mlp(pairs, config)
    path = tmp_path / "params.json"
    save_params(params, path, config)
    reloaded = load_params(path)
    assert np.array_equal(params.w1, reloaded.w1)
    assert np.array_equal(params.b1, reloaded.b1)
    assert np.array_equal(params.w2, reloaded.w2)
    assert params.b2 == reloaded.b2
    doc = json.loads(path.read_text())
    assert doc["d"] == 4
    assert doc["train_config"]["epochs"] == 10
