"""SGD training and evaluation loop."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import tensor as T
from .models import ModelConfig, build_model
from .nn import Module
from .rng import Rng
from .synth import Dataset
from .tensor import GradientTape, NumericError, Parameter

log = logging.getLogger(__name__)

CSV_HEADER = "epoch,split,loss,top1,mca"


@dataclass
class TrainConfig:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 4e-4
    epochs: int = 15
    milestones: tuple[int, ...] | None = None   # None: 35/65 and 55/65 of the run
    batch_size: int = 16
    eval_batch_size: int = 50
    seed: int = 0
    cls_weight: float = 1.0
    align_weight: float = 0.1

    def __post_init__(self):
        if self.milestones is not None:
            self.milestones = tuple(int(m) for m in self.milestones)
        self.validate()

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.eval_batch_size < 1:
            raise ValueError("invalid train config: epochs and batch sizes must be positive")
        if self.lr <= 0 or not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise ValueError("invalid train config: need lr > 0, 0 <= momentum < 1, weight_decay >= 0")
        ms = self.resolved_milestones()
        if list(ms) != sorted(set(ms)) or any(m <= 0 or m >= self.epochs for m in ms):
            raise ValueError(f"invalid train config: milestones {list(ms)} must increase strictly "
                             f"within (0, {self.epochs})")

    def resolved_milestones(self) -> tuple[int, ...]:
        return self.milestones if self.milestones is not None else scaled_milestones(self.epochs)

    def to_dict(self) -> dict:
        return asdict(self)


def train_config_keys() -> list[str]:
    return [f.name for f in fields(TrainConfig)]


def scaled_milestones(epochs: int, reference: tuple[int, ...] = (35, 55), total: int = 65) -> tuple[int, ...]:
    """Map the reference schedule onto ``epochs`` proportionally, dropping collisions."""
    out = []
    for m in reference:
        e = math.ceil(m * epochs / total)
        if 0 < e < epochs and (not out or e > out[-1]):
            out.append(e)
    return tuple(out)


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Rate for 0-based ``epoch``: divided by 10 at every milestone reached."""
    return cfg.lr * 0.1 ** sum(epoch >= m for m in cfg.resolved_milestones())


class SGD:
    """``v <- mu v + g + wd theta``; ``theta <- theta - lr v``.

    Weight decay skips parameters flagged ``decay=False`` (batch-norm
    scales/shifts, the topology gate and the learnable topology).
    """

    def __init__(self, params: list[Parameter], lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
        self.params = params
        self.lr, self.momentum, self.weight_decay = lr, momentum, weight_decay
        self.velocity = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            g = p.grad
            if self.weight_decay and p.decay:
                g = g + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data -= (self.lr * v).astype(p.data.dtype, copy=False)


@dataclass
class MetricsRow:
    epoch: int
    split: str
    loss: float
    top1: float
    mca: float
    wall_time: float = 0.0

    def csv(self) -> str:
        return f"{self.epoch},{self.split},{self.loss:.6f},{self.top1:.6f},{self.mca:.6f}"


def confusion_matrix(labels, preds, num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels), np.asarray(preds)), 1)
    return cm


def top1(cm: np.ndarray) -> float:
    return float(np.trace(cm) / max(cm.sum(), 1))


def mean_class_accuracy(cm: np.ndarray) -> float:
    """Unweighted mean of per-class recalls over classes that occur."""
    support = cm.sum(axis=1)
    present = support > 0
    return float(np.mean(np.diag(cm)[present] / support[present])) if present.any() else 0.0


@dataclass
class Evaluation:
    row: MetricsRow
    confusion: np.ndarray
    predictions: np.ndarray
    labels: np.ndarray

    def accuracy_on(self, classes) -> float:
        keep = np.isin(self.labels, list(classes))
        return float(np.mean(self.predictions[keep] == self.labels[keep])) if keep.any() else 0.0


def _loss(model_cfg: ModelConfig, cfg: TrainConfig, out, labels):
    loss = T.cross_entropy(out.logits, labels) * cfg.cls_weight
    if out.aux_loss is not None:
        loss = loss + out.aux_loss * cfg.align_weight
    return loss


def evaluate(model: Module, model_cfg: ModelConfig, dataset: Dataset, split: str, cfg: TrainConfig | None = None,
             epoch: int = 0) -> Evaluation:
    cfg = cfg or TrainConfig()
    check_compatible(model_cfg, dataset)
    model.eval()
    idx = dataset.indices(split)
    if not len(idx):
        raise ValueError(f"split {split!r} is empty")
    preds, total = [], 0.0
    start = time.perf_counter()
    for lo in range(0, len(idx), cfg.eval_batch_size):
        chunk = idx[lo:lo + cfg.eval_batch_size]
        batch = dataset.batch(chunk, model_cfg.t_skel)
        out = model(batch)
        total += float(_loss(model_cfg, cfg, out, batch.labels).data) * len(chunk)
        preds.append(out.logits.data.argmax(axis=-1))
    preds = np.concatenate(preds)
    labels = dataset.labels[idx]
    cm = confusion_matrix(labels, preds, model_cfg.num_classes)
    row = MetricsRow(epoch, split, total / len(idx), top1(cm), mean_class_accuracy(cm), time.perf_counter() - start)
    return Evaluation(row, cm, preds, labels)


def check_compatible(model_cfg: ModelConfig, dataset: Dataset) -> None:
    want = {"in_channels": dataset.channels, "joints": dataset.joints, "persons": dataset.persons,
            "t_rgb": dataset.frames}
    bad = {k: (getattr(model_cfg, k), v) for k, v in want.items() if getattr(model_cfg, k) != v}
    if dataset.num_classes > model_cfg.num_classes:
        bad["num_classes"] = (model_cfg.num_classes, dataset.num_classes)
    if bad:
        detail = ", ".join(f"{k}: model {a} vs data {b}" for k, (a, b) in bad.items())
        raise ValueError(f"model config does not match the dataset ({detail})")


@dataclass
class TrainResult:
    model: Module
    history: list[MetricsRow] = field(default_factory=list)
    best_state: dict | None = None
    best_epoch: int = -1
    best_val: float = -1.0
    final_eval: Evaluation | None = None
    best_eval: Evaluation | None = None

    def csv(self) -> str:
        return "\n".join([CSV_HEADER] + [r.csv() for r in self.history]) + "\n"


def train(model_cfg: ModelConfig, dataset: Dataset, cfg: TrainConfig, *, model: Module | None = None,
          on_epoch=None, on_step=None) -> TrainResult:
    """Train from scratch (or from ``model``) and keep the best-validation weights.

    ``on_step(epoch, batch, loss)`` sees every minibatch loss; ``on_epoch(epoch, rows)``
    sees the epoch's metrics rows.
    """
    check_compatible(model_cfg, dataset)
    model = model or build_model(model_cfg, Rng(model_cfg.seed))
    params = model.parameters()
    opt = SGD(params, cfg.lr, cfg.momentum, cfg.weight_decay)
    train_idx = dataset.indices("train")
    has_val = len(dataset.indices("val")) > 0
    shuffle = Rng(cfg.seed).child("shuffle")
    result = TrainResult(model)
    for epoch in range(cfg.epochs):
        opt.lr = learning_rate(cfg, epoch)
        model.train()
        order = shuffle.child(epoch).permutation(train_idx)
        start = time.perf_counter()
        seen = 0
        total = 0.0
        preds, labels = [], []
        for b, lo in enumerate(range(0, len(order), cfg.batch_size)):
            chunk = order[lo:lo + cfg.batch_size]
            batch = dataset.batch(chunk, model_cfg.t_skel)
            batch_id = f"epoch {epoch} batch {b} (samples {','.join(batch.ids)})"
            model.zero_grad()
            try:
                with GradientTape() as tape:
                    out = model(batch)
                    loss = _loss(model_cfg, cfg, out, batch.labels)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise NumericError(f"loss is {value}")
                T.backward(loss, tape)
            except NumericError as err:
                raise NumericError(f"non-finite value at {batch_id}: {err}") from err
            opt.step()
            if on_step is not None:
                on_step(epoch, b, value)
            total += value * len(chunk)
            seen += len(chunk)
            preds.append(out.logits.data.argmax(-1))
            labels.append(batch.labels)
        cm = confusion_matrix(np.concatenate(labels), np.concatenate(preds), model_cfg.num_classes)
        row = MetricsRow(epoch, "train", total / seen, top1(cm), mean_class_accuracy(cm), time.perf_counter() - start)
        cm_rows = [row]
        if has_val:
            ev = evaluate(model, model_cfg, dataset, "val", cfg, epoch)
            cm_rows.append(ev.row)
            result.final_eval = ev
            if ev.row.top1 > result.best_val:
                result.best_val, result.best_epoch = ev.row.top1, epoch
                result.best_state = model.state_dict()
                result.best_eval = ev
        result.history.extend(cm_rows)
        for r in cm_rows:
            log.info("epoch %d %s loss %.4f top1 %.4f mca %.4f (%.1fs)", r.epoch, r.split, r.loss, r.top1,
                     r.mca, r.wall_time)
        if on_epoch is not None:
            on_epoch(epoch, cm_rows)
    if result.best_state is None:
        result.best_state, result.best_epoch = model.state_dict(), cfg.epochs - 1
    return result
