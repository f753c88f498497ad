"""Losses, Adam, and the deterministic training loop.

Defaults follow the reference recipe: Adam at learning rate 1e-4, batch
size 6, binary cross entropy, no schedule, no augmentation.  The last
partial batch is kept.  Every source of randomness is seeded: the train
order of each epoch comes from its own derived RNG, so a resumed run
replays the exact batch sequence of an uninterrupted one.

A checkpoint is one weight file (parameters, batchnorm buffers, and Adam
moments as extra ``.adam_m``/``.adam_v`` entries) plus a JSON sidecar
``{epoch, adam: {t, beta1, beta2, eps}, history: [...], model: {...}}``.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Sample, to_input_tensor
from .errors import ConfigError, ShapeError, TrainingError
from .metrics import split_scores
from .model import UNet, UNetConfig, build, load_state
from .nn import Parameter, Tape, Tensor, backward, record_op
from .variants import ModelVariant, Task
from .weights import read_weight_file, write_weight_file

CLAMP = 1e-7
DICE_EPS = 1.0


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 6
    epochs: int = 200
    loss: str = "bce"  # "bce" | "dice"
    seed: int = 0
    checkpoint_every: int = 0  # 0 = only best/last
    eval_train: bool = False  # also compute Dice on the train split per epoch

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.loss not in ("bce", "dice"):
            raise ConfigError(f"loss must be 'bce' or 'dice', got {self.loss!r}")


def bce_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean binary cross entropy with predictions clamped to [1e-7, 1-1e-7]."""
    if pred.data.shape != target.shape:
        raise ShapeError(f"bce_loss shape mismatch: {pred.data.shape} vs {target.shape}")
    t = target.astype(np.float64)
    p = np.clip(pred.data.astype(np.float64), CLAMP, 1.0 - CLAMP)
    val = float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log1p(-p))))
    out = Tensor(np.asarray(val, dtype=pred.dtype), requires_grad=pred.requires_grad)

    def backward_fn(dy: np.ndarray) -> None:
        if pred.requires_grad:
            inside = (pred.data > CLAMP) & (pred.data < 1.0 - CLAMP)
            g = (p - t) / (p * (1.0 - p)) / p.size * inside
            pred.accumulate_grad((float(dy) * g).astype(pred.dtype))

    record_op(out, backward_fn)
    return out


def soft_dice_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """1 - (2 sum(p t) + eps)/(sum p + sum t + eps), per item, batch-averaged."""
    if pred.data.shape != target.shape:
        raise ShapeError(f"soft_dice_loss shape mismatch: {pred.data.shape} vs {target.shape}")
    n = pred.data.shape[0]
    p = pred.data.astype(np.float64).reshape(n, -1)
    t = target.astype(np.float64).reshape(n, -1)
    inter = (p * t).sum(axis=1)
    denom = p.sum(axis=1) + t.sum(axis=1) + DICE_EPS
    per_item = 1.0 - (2.0 * inter + DICE_EPS) / denom
    out = Tensor(np.asarray(per_item.mean(), dtype=pred.dtype), requires_grad=pred.requires_grad)

    def backward_fn(dy: np.ndarray) -> None:
        if pred.requires_grad:
            # d/dp_i = -(2 t_i denom - (2 inter + eps)) / denom^2, then / n
            g = -(2.0 * t * denom[:, None] - (2.0 * inter + DICE_EPS)[:, None]) / (denom**2)[:, None] / n
            pred.accumulate_grad((float(dy) * g.reshape(pred.data.shape)).astype(pred.dtype))

    record_op(out, backward_fn)
    return out


LOSSES = {"bce": bce_loss, "dice": soft_dice_loss}


@dataclass
class AdamState:
    """First/second moment estimates per parameter name, plus the step count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: list[Parameter], grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """One Adam update in place; bias-corrected moments, float32 state."""
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p, g in zip(params, grads):
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {p.name!r}")
        m = state.m.get(p.name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[p.name] = m
            state.v[p.name] = np.zeros_like(p.data)
        v = state.v[p.name]
        m += (1.0 - state.beta1) * (g - m)
        v += (1.0 - state.beta2) * (g * g - v)
        p.data -= (lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(p.data.dtype)


def _target_batch(samples: list[Sample], task: Task) -> np.ndarray:
    key = "boundary_mask" if task is Task.BOUNDARY else "area_mask"
    return np.stack([getattr(s, key)[None].astype(np.float32) for s in samples])


def _input_batch(samples: list[Sample], variant: ModelVariant) -> np.ndarray:
    return np.stack([to_input_tensor(s, variant) for s in samples])


@dataclass
class TrainResult:
    history: list[dict]
    best_epoch: int
    best_val_dice: float
    best_path: str | None
    last_path: str | None


def _save_checkpoint(model: UNet, state: AdamState, epoch: int, history: list[dict], task: Task, path_stem: Path) -> None:
    entries = dict(model.state_entries())
    for name in [p.name for p in model.parameters()]:
        if name in state.m:
            entries[name + ".adam_m"] = state.m[name]
            entries[name + ".adam_v"] = state.v[name]
    write_weight_file(path_stem.with_suffix(".pswt"), entries)
    sidecar = {
        "epoch": epoch,
        "adam": {"t": state.t, "beta1": state.beta1, "beta2": state.beta2, "eps": state.eps},
        "history": history,
        "model": {
            "variant": model.variant.value,
            "task": task.value,
            "config": model.config.to_dict(),
        },
    }
    path_stem.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_checkpoint(path_stem) -> tuple[UNet, AdamState, int, list[dict], Task]:
    """Rebuild model + optimizer state from a checkpoint stem (no suffix)."""
    stem = Path(path_stem)
    sidecar = json.loads(stem.with_suffix(".json").read_text())
    variant = ModelVariant(sidecar["model"]["variant"])
    task = Task(sidecar["model"]["task"])
    config = UNetConfig.from_dict(sidecar["model"]["config"])
    model = build(variant, config)
    entries = read_weight_file(stem.with_suffix(".pswt"))
    state = AdamState(
        t=sidecar["adam"]["t"],
        beta1=sidecar["adam"]["beta1"],
        beta2=sidecar["adam"]["beta2"],
        eps=sidecar["adam"]["eps"],
    )
    plain = {}
    for name, arr in entries.items():
        if name.endswith(".adam_m"):
            state.m[name[: -len(".adam_m")]] = arr.copy()
        elif name.endswith(".adam_v"):
            state.v[name[: -len(".adam_v")]] = arr.copy()
        else:
            plain[name] = arr
    load_state(model, plain)
    return model, state, sidecar["epoch"], sidecar["history"], task


def train(
    model: UNet,
    train_samples: list[Sample],
    val_samples: list[Sample],
    task: Task,
    config: TrainConfig,
    out_dir=None,
    state: AdamState | None = None,
    start_epoch: int = 0,
    history: list[dict] | None = None,
) -> TrainResult:
    """Run the training loop; deterministic for fixed (seed, config, data).

    ``val_samples`` may be empty (overfit checks): validation metrics are
    then null and the final weights double as the best checkpoint.
    """
    config.validate()
    if not train_samples:
        raise ConfigError("train split is empty")
    loss_fn = LOSSES[config.loss]
    state = state or AdamState()
    history = list(history or [])
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    best_val = -math.inf
    best_epoch = -1
    for row in history:
        if row.get("val_dice") is not None and row["val_dice"] > best_val:
            best_val, best_epoch = row["val_dice"], row["epoch"]

    params = model.parameters()
    for epoch in range(start_epoch, config.epochs):
        order = list(range(len(train_samples)))
        random.Random(f"{config.seed}:{epoch}").shuffle(order)
        epoch_loss = 0.0
        n_batches = 0
        for b0 in range(0, len(order), config.batch_size):
            batch = [train_samples[i] for i in order[b0 : b0 + config.batch_size]]
            x = _input_batch(batch, model.variant)
            y = _target_batch(batch, task)
            for p in params:
                p.zero_grad()
            with Tape() as tape:
                pred = model.forward(x, train=True)
                loss = loss_fn(pred, y)
            if not math.isfinite(float(loss.data)):
                raise TrainingError(
                    f"loss diverged to {float(loss.data)} at epoch {epoch}, batch {n_batches}"
                )
            backward(tape, loss, params)
            adam_step(params, [p.grad for p in params], state, config.learning_rate)
            epoch_loss += float(loss.data)
            n_batches += 1

        row = {"epoch": epoch, "train_loss": epoch_loss / max(1, n_batches), "val_dice": None, "val_acc": None}
        if val_samples:
            vd, va = split_scores(model, val_samples, task, batch_size=config.batch_size)
            row["val_dice"], row["val_acc"] = vd, va
        if config.eval_train:
            td, ta = split_scores(model, train_samples, task, batch_size=config.batch_size)
            row["train_dice"], row["train_acc"] = td, ta
        history.append(row)

        improved = row["val_dice"] is not None and row["val_dice"] > best_val
        if improved:
            best_val, best_epoch = row["val_dice"], epoch
        if out is not None:
            if improved:
                _save_checkpoint(model, state, epoch, history, task, out / "best")
            if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
                _save_checkpoint(model, state, epoch, history, task, out / "last")

    best_path = last_path = None
    if out is not None:
        _save_checkpoint(model, state, config.epochs - 1, history, task, out / "last")
        last_path = str(out / "last")
        if best_epoch < 0:  # no validation: final weights are the best available
            _save_checkpoint(model, state, config.epochs - 1, history, task, out / "best")
            best_epoch = config.epochs - 1
        best_path = str(out / "best")
    return TrainResult(history, best_epoch, best_val if best_val != -math.inf else float("nan"), best_path, last_path)
