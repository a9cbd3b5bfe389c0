"""Minibatch SGD (with optional momentum) for the toy network."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import DivergenceDetected, EmptyList, InvalidSpec, NonFiniteInput, ShapeMismatch
from ..lossfn import image_weights, uniform_weights
from ..metrics import ConfusionMatrix, accumulate_confusion, mean_iou, per_class_iou, recall
from .model import NetworkConfig, ParameterSet, batch_loss_and_grad, init_params, predict

log = logging.getLogger(__name__)

WEIGHTING_MODES = ("per_image_eq2", "uniform")
_ALIASES = {"eq2": "per_image_eq2"}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 8
    weighting: str = "per_image_eq2"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weighting", _ALIASES.get(self.weighting, self.weighting))
        if self.weighting not in WEIGHTING_MODES:
            raise InvalidSpec(f"weighting must be one of {WEIGHTING_MODES}")
        if not self.learning_rate > 0:
            raise InvalidSpec("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise InvalidSpec("momentum must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidSpec("epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def _confusion(params, images, labels, C) -> ConfusionMatrix:
    cm = ConfusionMatrix.empty(C)
    pred = predict(params, images)
    for y, p in zip(labels, pred):
        cm = accumulate_confusion(y, p, cm)
    return cm


def train(
    data: Sequence[tuple[np.ndarray, np.ndarray]],
    cfg: TrainConfig,
    netcfg: NetworkConfig,
    val: Sequence[tuple[np.ndarray, np.ndarray]] | None = None,
    on_epoch: Callable[[int, ParameterSet, dict], None] | None = None,
) -> tuple[ParameterSet, list[dict]]:
    """Train from ``netcfg.seed`` initial weights; shuffles with ``cfg.seed``.

    Images are uint8 ``(H, W, 3)`` (scaled by 1/255) or floats already in
    [0, 1].  Each step minimises the batch-summed weighted loss divided by
    the batch's valid pixel count.  Validation falls back to the training
    set when ``val`` is not given.
    """
    if not data:
        raise EmptyList("no training data")
    images = np.stack([_normalize(img) for img, _ in data])
    labels = np.stack([np.asarray(y, dtype=np.int64) for _, y in data])
    if images.shape[:3] != labels.shape:
        raise ShapeMismatch("images and label maps must share one size")
    if val:
        v_images = np.stack([_normalize(img) for img, _ in val])
        v_labels = np.stack([np.asarray(y, dtype=np.int64) for _, y in val])
    else:
        v_images, v_labels = images, labels

    C = netcfg.C_out
    weigh = image_weights if cfg.weighting == "per_image_eq2" else uniform_weights
    weights = np.stack([weigh(y, C).weights for y in labels])

    params = init_params(netcfg)
    velocity = np.zeros(params.size)
    rng = np.random.default_rng(cfg.seed)
    history = []
    n = len(images)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        ep_loss = 0.0
        ep_valid = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            total, _, grad, n_valid = batch_loss_and_grad(params, images[idx], labels[idx], weights[idx])
            if not np.isfinite(total) or not np.isfinite(grad).all():
                raise DivergenceDetected(epoch, total)
            ep_loss += total
            ep_valid += n_valid
            velocity = cfg.momentum * velocity - cfg.learning_rate * (grad / n_valid)
            params = params.with_vector(params.vector + velocity)
            if not np.isfinite(params.vector).all():
                raise DivergenceDetected(epoch, total)
        try:
            cm = _confusion(params, v_images, v_labels, C)
        except NonFiniteInput:
            raise DivergenceDetected(epoch, ep_loss) from None
        row = {
            "epoch": epoch,
            "loss_sum": ep_loss,
            "loss": ep_loss / ep_valid,
            "val_mean_iou": mean_iou(cm),
            "val_class_iou": [None if np.isnan(v) else float(v) for v in per_class_iou(cm)],
            "val_class_recall": [None if np.isnan(r) else r for r in (recall(cm, c) for c in range(C))],
        }
        history.append(row)
        log.debug("epoch %d loss %.6f val mIoU %.4f", epoch, row["loss"], row["val_mean_iou"])
        if on_epoch is not None:
            on_epoch(epoch, params, row)
    return params, history


def _normalize(img) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64)
