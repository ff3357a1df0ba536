import math

import numpy as np
import pytest

from vlmseg.classes.grid import ConfidenceMap, LabelMap, PixelMask
from vlmseg.classes.params import Checkpoint, ModelParams, TrainState
from vlmseg.errors import TrainingError
from vlmseg.pixelmodel import (
    ce_loss_and_grad,
    ce_loss_and_grad_batch,
    ema_update,
    featurize,
    forward,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
)


def _brute_features(image):
    height, width, channels = image.shape
    padded = np.pad(image, ((1, 1), (1, 1), (0, 0)), mode="symmetric")
    out = np.zeros((height, width, 3 * channels))
    for y in range(height):
        for x in range(width):
            for c in range(channels):
                window = padded[y : y + 3, x : x + 3, c]
                out[y, x, c] = image[y, x, c]
                out[y, x, channels + c] = window.mean()
                out[y, x, 2 * channels + c] = window.var()
    return out


def _state(student: ModelParams, teacher: ModelParams, **kwargs) -> TrainState:
    return TrainState(student=student, teacher=teacher, **kwargs)


def test_constant_image_has_no_variance():
    feats = featurize(np.full((6, 5, 2), 3.7))
    assert feats.shape == (6, 5, 6)
    assert np.all(feats[..., 4:] == 0.0)


def test_window_mean_support():
    image = np.zeros((7, 7, 1))
    image[3, 3] = 9.0
    mean = featurize(image)[..., 1]
    support = np.zeros((7, 7), dtype=bool)
    support[2:5, 2:5] = True
    assert np.array_equal(mean != 0, support)
    assert np.allclose(mean[support], 1.0)


def test_features_match_window_loops():
    rng = np.random.default_rng(0)
    for _ in range(5):
        image = rng.normal(size=(8, 8, 2))
        assert np.allclose(featurize(image), _brute_features(image), atol=1e-12)


def test_forward_basics():
    feats = np.random.default_rng(1).normal(size=(4, 5, 6))
    probs = forward(ModelParams.zeros(6, 3), feats)
    assert np.allclose(probs.data, 1.0 / 3)

    params = ModelParams(weights=np.zeros((6, 3)), bias=[10.0, 0.0, 0.0])
    assert np.all(forward(params, feats).data[..., 0] > 0.999)

    params = ModelParams(weights=np.random.default_rng(2).normal(size=(6, 3)), bias=[0.1, 0.2, 0.3])
    shifted = ModelParams(weights=params.weights, bias=params.bias + 50.0)
    assert np.allclose(forward(params, feats).data, forward(shifted, feats).data, atol=1e-12)
    assert np.allclose(forward(params, feats).data.sum(axis=2), 1.0, atol=1e-6)


def test_perfect_predictions_cost_nothing():
    feats = np.zeros((3, 3, 2))
    params = ModelParams(weights=np.zeros((2, 3)), bias=[1000.0, 0.0, 0.0])
    targets = LabelMap(data=np.zeros((3, 3), dtype=np.uint8))
    loss, grad = ce_loss_and_grad(params, feats, targets, PixelMask.full(3, 3))
    assert loss == 0.0
    assert np.all(grad.weights == 0) and np.all(grad.bias == 0)


def test_uniform_predictions_cost_log_k():
    feats = np.random.default_rng(3).normal(size=(4, 4, 2))
    targets = LabelMap(data=np.random.default_rng(4).integers(0, 7, size=(4, 4)))
    loss, _ = ce_loss_and_grad(ModelParams.zeros(2, 7), feats, targets, PixelMask.full(4, 4))
    assert loss == pytest.approx(math.log(7), abs=1e-12)
    assert math.log(7) == pytest.approx(1.9459, abs=1e-4)


def test_empty_mask_gives_zero_loss():
    feats = np.ones((2, 2, 3))
    targets = LabelMap(data=np.zeros((2, 2), dtype=np.uint8))
    params = ModelParams(weights=np.ones((3, 2)), bias=[0.5, -0.5])
    loss, grad = ce_loss_and_grad(params, feats, targets, PixelMask.full(2, 2, False))
    assert loss == 0.0 and not grad.weights.any() and not grad.bias.any()


def _numeric_grad(params, feats, targets, valid, weights, eps=1e-6):
    def loss_at(w, b):
        return ce_loss_and_grad(ModelParams(weights=w, bias=b), feats, targets, valid, weights)[0]

    grad_w = np.zeros_like(params.weights)
    for idx in np.ndindex(*params.weights.shape):
        up, down = params.weights.copy(), params.weights.copy()
        up[idx] += eps
        down[idx] -= eps
        grad_w[idx] = (loss_at(up, params.bias) - loss_at(down, params.bias)) / (2 * eps)
    grad_b = np.zeros_like(params.bias)
    for idx in range(params.bias.shape[0]):
        up, down = params.bias.copy(), params.bias.copy()
        up[idx] += eps
        down[idx] -= eps
        grad_b[idx] = (loss_at(params.weights, up) - loss_at(params.weights, down)) / (2 * eps)
    return grad_w, grad_b


@pytest.mark.parametrize("weighted", [False, True])
def test_gradient_matches_finite_differences(weighted):
    rng = np.random.default_rng(5)
    for _ in range(100):
        feats = rng.normal(size=(5, 4, 3))
        targets = LabelMap(data=rng.integers(0, 4, size=(5, 4)))
        valid = PixelMask(data=rng.random((5, 4)) < 0.7)
        weights = ConfidenceMap(data=rng.uniform(0.3, 1.0, size=(5, 4))) if weighted else None
        params = ModelParams(weights=rng.normal(size=(3, 4)), bias=rng.normal(size=4))
        _, grad = ce_loss_and_grad(params, feats, targets, valid, weights)
        num_w, num_b = _numeric_grad(params, feats, targets, valid, weights)
        assert np.allclose(grad.weights, num_w, rtol=1e-4, atol=1e-7)
        assert np.allclose(grad.bias, num_b, rtol=1e-4, atol=1e-7)


def test_batch_loss_averages_over_all_valid_pixels():
    rng = np.random.default_rng(6)
    params = ModelParams(weights=rng.normal(size=(2, 3)), bias=rng.normal(size=3))
    feats = rng.normal(size=(4, 4, 2))
    targets = LabelMap(data=rng.integers(0, 3, size=(4, 4)))
    full = PixelMask.full(4, 4)
    single, _ = ce_loss_and_grad(params, feats, targets, full)
    loss, grad, count = ce_loss_and_grad_batch(params, [(feats, targets, full, None)] * 2)
    assert count == 32
    assert loss == pytest.approx(single, rel=1e-12)
    assert ce_loss_and_grad_batch(params, [])[2] == 0


def test_sgd_moves_only_the_student():
    student = ModelParams(weights=np.ones((2, 2)), bias=[0.0, 1.0])
    teacher = ModelParams(weights=np.full((2, 2), 3.0), bias=[2.0, 2.0])
    grad = ModelParams(weights=np.full((2, 2), 0.5), bias=[1.0, -1.0])

    state = _state(student, teacher, learning_rate=0.1)
    digest = state.teacher.digest()
    twice = sgd_step(sgd_step(state, grad), grad)
    assert twice.step == 2
    assert np.allclose(twice.student.weights, student.weights - 2 * 0.1 * grad.weights, atol=1e-12)
    assert np.allclose(twice.student.bias, student.bias - 2 * 0.1 * grad.bias, atol=1e-12)
    assert twice.teacher.digest() == digest

    zero = ModelParams.zeros(2, 2)
    assert sgd_step(state, zero).student.digest() == student.digest()
    frozen = _state(student, teacher, learning_rate=0.0)
    assert sgd_step(frozen, grad).student.digest() == student.digest()


def test_sgd_rejects_non_finite_gradients():
    state = _state(ModelParams.zeros(2, 2), ModelParams.zeros(2, 2))
    bad = ModelParams.construct(weights=np.full((2, 2), np.nan), bias=np.zeros(2))
    with pytest.raises(TrainingError):
        sgd_step(state, bad)


def test_ema_formula():
    ones = ModelParams(weights=np.ones((1, 2)), bias=np.ones(2))
    zeros = ModelParams.zeros(1, 2)
    assert ema_update(_state(zeros, ones, ema_decay=0.0)).teacher.digest() == zeros.digest()
    updated = ema_update(_state(zeros, ones, ema_decay=0.99)).teacher
    assert np.allclose(updated.weights, 0.99)


def test_ema_contracts_geometrically():
    alpha = 0.9
    student = ModelParams(weights=np.full((2, 3), 2.0), bias=np.full(3, -1.0))
    state = _state(student, ModelParams.zeros(2, 3), ema_decay=alpha)
    start = np.abs(state.teacher.weights - student.weights)
    for step in range(1, 101):
        state = ema_update(state)
        gap = np.abs(state.teacher.weights - student.weights)
        assert np.allclose(gap, start * alpha**step, atol=1e-6)


def test_twin_shapes_are_enforced():
    with pytest.raises(ValueError):
        _state(ModelParams.zeros(2, 3), ModelParams.zeros(3, 3))
    with pytest.raises(ValueError):
        ModelParams(weights=np.full((2, 2), np.inf), bias=np.zeros(2))


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    state = _state(
        ModelParams(weights=rng.normal(size=(6, 4)), bias=rng.normal(size=4)),
        ModelParams(weights=rng.normal(size=(6, 4)), bias=rng.normal(size=4)),
        step=17,
        ema_decay=0.95,
        learning_rate=0.05,
    )
    save_checkpoint(Checkpoint(state=state, epoch=3, val_miou=0.625), tmp_path / "best")
    header = (tmp_path / "best" / "checkpoint.txt").read_text()
    assert "step = 17" in header and "ema_decay = 0.95" in header

    loaded = load_checkpoint(tmp_path / "best")
    assert loaded.epoch == 3 and loaded.val_miou == 0.625
    assert loaded.state.step == 17 and loaded.state.learning_rate == 0.05
    # weights are stored as 32-bit floats
    assert np.allclose(loaded.state.student.weights, state.student.weights, atol=1e-6)
    assert np.allclose(loaded.state.teacher.bias, state.teacher.bias, atol=1e-6)
