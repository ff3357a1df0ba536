"""Per-pixel linear classifier with fixed local features

Features are the raw channels plus the 3x3 window mean and variance of each
channel (symmetric padding at the border). Only the linear weights train, with
the closed-form softmax cross-entropy gradient.
"""
from logging import getLogger
from pathlib import Path
from typing import Iterable, Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from vlmseg.classes.enums import GridKind
from vlmseg.classes.grid import ConfidenceMap, LabelMap, PixelMask, ProbMap
from vlmseg.classes.params import Checkpoint, ModelParams, TrainState
from vlmseg.errors import ConfigurationError, GridShapeError, TrainingError
from vlmseg.grid_io import read_grid, write_grid

logger = getLogger("vlmseg")

FEATURES_PER_CHANNEL = 3
CHECKPOINT_HEADER = "checkpoint.txt"


def num_model_features(num_channels: int) -> int:
    return FEATURES_PER_CHANNEL * num_channels


def featurize(image: np.ndarray) -> np.ndarray:
    """H x W x C image -> H x W x 3C [raw, window mean, window variance]"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    padded = np.pad(image, ((1, 1), (1, 1), (0, 0)), mode="symmetric")
    windows = sliding_window_view(padded, (3, 3), axis=(0, 1))
    mean = windows.mean(axis=(-2, -1))
    var = windows.var(axis=(-2, -1))
    flat = windows.max(axis=(-2, -1)) == windows.min(axis=(-2, -1))
    var[flat] = 0.0
    return np.concatenate([image, mean, var], axis=2)


def init_params(num_features: int, num_classes: int, seed: Optional[int] = None, scale: float = 0.0) -> ModelParams:
    if seed is None or scale == 0.0:
        return ModelParams.zeros(num_features, num_classes)
    rng = np.random.default_rng([seed, 0x1A17])
    return ModelParams(
        weights=rng.normal(0.0, scale, size=(num_features, num_classes)),
        bias=np.zeros(num_classes),
    )


def _logits(params: ModelParams, features: np.ndarray) -> np.ndarray:
    if features.shape[-1] != params.num_features:
        raise GridShapeError(
            f"features have {features.shape[-1]} channels, params expect {params.num_features}"
        )
    return features @ params.weights + params.bias


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def predict_probs(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Unwrapped softmax probabilities for any leading shape"""
    return np.exp(_log_softmax(_logits(params, features)))


def forward(params: ModelParams, features: np.ndarray) -> ProbMap:
    return ProbMap(data=predict_probs(params, features))


def predict_labels(params: ModelParams, features: np.ndarray) -> np.ndarray:
    return np.argmax(_logits(params, features), axis=-1)


def _ce_core(
    params: ModelParams,
    features: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    normalizer: int,
) -> Tuple[float, ModelParams]:
    """features n x F, targets n, weights n; mean over `normalizer` pixels"""
    if normalizer == 0:
        return 0.0, ModelParams.zeros(params.num_features, params.num_classes)
    log_probs = _log_softmax(_logits(params, features))
    rows = np.arange(targets.shape[0])
    loss = float(-(weights * log_probs[rows, targets]).sum() / normalizer)
    delta = np.exp(log_probs)
    delta[rows, targets] -= 1.0
    delta *= (weights / normalizer)[:, None]
    grad_w, grad_b = features.T @ delta, delta.sum(axis=0)
    if not (np.isfinite(loss) and np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
        raise TrainingError(f"non-finite loss or gradient over {normalizer} pixels (loss = {loss})")
    return loss, ModelParams(weights=grad_w, bias=grad_b)


def _select(features, targets, valid, pixel_weights):
    mask = valid.data if isinstance(valid, PixelMask) else np.asarray(valid, dtype=np.bool_)
    target_data = targets.data if isinstance(targets, LabelMap) else np.asarray(targets)
    if features.shape[:-1] != target_data.shape or mask.shape != target_data.shape:
        raise GridShapeError(
            f"features {features.shape}, targets {target_data.shape} and mask {mask.shape} disagree"
        )
    chosen = features[mask]
    chosen_targets = target_data[mask].astype(np.int64)
    if pixel_weights is None:
        chosen_weights = np.ones(chosen_targets.shape[0])
    else:
        weight_data = pixel_weights.data if isinstance(pixel_weights, ConfidenceMap) else pixel_weights
        chosen_weights = np.asarray(weight_data, dtype=np.float64)[mask]
    return chosen, chosen_targets, chosen_weights


def ce_loss_and_grad(
    params: ModelParams,
    features: np.ndarray,
    targets: LabelMap,
    valid: PixelMask,
    pixel_weights: Optional[ConfidenceMap] = None,
) -> Tuple[float, ModelParams]:
    """Mean (optionally confidence-weighted) CE over valid pixels; 0 when none are valid"""
    chosen, chosen_targets, chosen_weights = _select(features, targets, valid, pixel_weights)
    if chosen_targets.size and chosen_targets.max() >= params.num_classes:
        raise GridShapeError(f"target {chosen_targets.max()} outside [0, {params.num_classes})")
    return _ce_core(params, chosen, chosen_targets, chosen_weights, chosen_targets.shape[0])


def ce_loss_and_grad_batch(
    params: ModelParams,
    samples: Iterable[Tuple[np.ndarray, LabelMap, PixelMask, Optional[ConfidenceMap]]],
) -> Tuple[float, ModelParams, int]:
    """CE averaged over every valid pixel of a batch; also returns the pixel count"""
    parts = [_select(*sample) for sample in samples]
    if not parts:
        return 0.0, ModelParams.zeros(params.num_features, params.num_classes), 0
    features = np.concatenate([part[0] for part in parts], axis=0)
    targets = np.concatenate([part[1] for part in parts], axis=0)
    weights = np.concatenate([part[2] for part in parts], axis=0)
    loss, grad = _ce_core(params, features, targets, weights, targets.shape[0])
    return loss, grad, int(targets.shape[0])


def add_grads(first: ModelParams, second: ModelParams) -> ModelParams:
    return ModelParams(weights=first.weights + second.weights, bias=first.bias + second.bias)


def sgd_step(state: TrainState, grad: ModelParams) -> TrainState:
    """Plain SGD on the student; the teacher is left untouched"""
    if not (np.all(np.isfinite(grad.weights)) and np.all(np.isfinite(grad.bias))):
        raise TrainingError(f"non-finite gradient at step {state.step}")
    if not grad.same_shape(state.student):
        raise GridShapeError("gradient shape does not match the student")
    lr = state.learning_rate
    with np.errstate(over="ignore", invalid="ignore"):
        weights = state.student.weights - lr * grad.weights
        bias = state.student.bias - lr * grad.bias
    if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
        raise TrainingError(f"student parameters diverged at step {state.step} (lr = {lr})")
    student = ModelParams(weights=weights, bias=bias)
    return state.copy(update={"student": student, "step": state.step + 1})


def ema_update(state: TrainState) -> TrainState:
    """teacher <- a * teacher + (1 - a) * student"""
    alpha = state.ema_decay
    teacher = ModelParams(
        weights=alpha * state.teacher.weights + (1.0 - alpha) * state.student.weights,
        bias=alpha * state.teacher.bias + (1.0 - alpha) * state.student.bias,
    )
    return state.copy(update={"teacher": teacher})


def save_checkpoint(checkpoint: Checkpoint, directory: Union[str, Path]) -> None:
    """GRD1 float grids for both parameter sets plus a `key = value` header"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    state = checkpoint.state
    for name, params in (("student", state.student), ("teacher", state.teacher)):
        write_grid(params.weights, directory / f"{name}.weights.grd")
        write_grid(params.bias[None, :], directory / f"{name}.bias.grd")
    header = {
        "step": state.step,
        "ema_decay": repr(state.ema_decay),
        "learning_rate": repr(state.learning_rate),
        "epoch": checkpoint.epoch,
        "val_miou": repr(checkpoint.val_miou),
    }
    lines = [f"{key} = {value}" for key, value in header.items()]
    (directory / CHECKPOINT_HEADER).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(directory: Union[str, Path]) -> Checkpoint:
    directory = Path(directory)
    header = {}
    for line in (directory / CHECKPOINT_HEADER).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        header[key.strip()] = value.strip()
    missing = {"step", "ema_decay", "learning_rate", "epoch", "val_miou"} - set(header)
    if missing:
        raise ConfigurationError(f"checkpoint header lacks {sorted(missing)}")
    params = {}
    for name in ("student", "teacher"):
        params[name] = ModelParams(
            weights=read_grid(directory / f"{name}.weights.grd", GridKind.ARRAY),
            bias=read_grid(directory / f"{name}.bias.grd", GridKind.ARRAY)[0],
        )
    state = TrainState(
        student=params["student"],
        teacher=params["teacher"],
        step=int(header["step"]),
        ema_decay=float(header["ema_decay"]),
        learning_rate=float(header["learning_rate"]),
    )
    return Checkpoint(state=state, epoch=int(header["epoch"]), val_miou=float(header["val_miou"]))
