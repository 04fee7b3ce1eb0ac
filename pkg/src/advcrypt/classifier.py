"""Differentiable-classifier harness: training, prediction, input gradients.

Wraps torch modules behind a handle whose parameter digest pins the exact
trained weights, so encryption recipes can reference the classifier that
produced them and runs are reproducible.
"""

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .data import LabeledDataset
from .errors import IntegrityError, LoadError, TrainingError, ValidationError
from .models import build_model
from .utils import canonical_json

_GRAD_EPS = 1e-12


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 128
    schedule: dict = dataclasses.field(default_factory=lambda: {"kind": "cosine", "lr": 0.05})
    seed: int = 0
    augment: bool = False
    momentum: float = 0.9
    weight_decay: float = 5e-4

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.schedule.get("kind") not in ("cosine", "constant", "step"):
            raise ValidationError(f"unknown schedule kind {self.schedule.get('kind')!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclasses.dataclass
class ClassifierHandle:
    """A trained classifier plus the metadata needed to reproduce it."""

    architecture_id: str
    num_classes: int
    input_shape: tuple
    parameter_digest: str
    train_seed: int
    module: torch.nn.Module = dataclasses.field(repr=False, compare=False)


def parameter_digest(module: torch.nn.Module) -> str:
    """sha256 over all parameters and buffers in sorted state-dict order."""
    h = hashlib.sha256()
    state = module.state_dict()
    for key in sorted(state):
        h.update(key.encode())
        h.update(state[key].detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def _to_nchw(inputs: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    arr = np.asarray(inputs)
    if arr.ndim == 3:
        arr = arr[None]
    arr = np.ascontiguousarray(arr)
    if not arr.flags.writeable:
        arr = arr.copy()  # torch cannot wrap read-only buffers
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous().to(dtype)


def _make_scheduler(optimizer, schedule, epochs):
    kind = schedule["kind"]
    if kind == "cosine":
        return torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=epochs)
    if kind == "step":
        return torch.optim.lr_scheduler.StepLR(
            optimizer, step_size=schedule.get("step_every", max(1, epochs // 3)),
            gamma=schedule.get("gamma", 0.1))
    return torch.optim.lr_scheduler.ConstantLR(optimizer, factor=1.0, total_iters=0)


def _augment_batch(xb: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    """Random circular shift plus horizontal flip, applied per batch."""
    h = xb.shape[2] // 8
    sh = torch.randint(-h, h + 1, (2,), generator=gen)
    xb = torch.roll(xb, (int(sh[0]), int(sh[1])), dims=(2, 3))
    if torch.rand((), generator=gen) < 0.5:
        xb = torch.flip(xb, dims=(3,))
    return xb


def train(dataset: LabeledDataset, architecture_id: str, config: TrainConfig) -> ClassifierHandle:
    """Train a classifier on the dataset; deterministic for a fixed seed."""
    if len(dataset) == 0:
        raise ValidationError("cannot train on an empty dataset")
    present = np.unique(dataset.labels)
    if len(present) != dataset.num_classes:
        missing = sorted(set(range(dataset.num_classes)) - set(present.tolist()))
        raise ValidationError(f"training data has no samples for classes {missing}")
    torch.manual_seed(config.seed)
    model = build_model(architecture_id, dataset.num_classes, dataset.sample_shape)
    xs = _to_nchw(dataset.inputs)
    ys = torch.from_numpy(dataset.labels.copy())
    lr = float(config.schedule.get("lr", 0.05))
    opt = torch.optim.SGD(model.parameters(), lr=lr, momentum=config.momentum,
                          weight_decay=config.weight_decay)
    sched = _make_scheduler(opt, config.schedule, config.epochs)
    loss_fn = nn.CrossEntropyLoss()
    gen = torch.Generator().manual_seed(config.seed)
    n = len(xs)

    model.eval()
    with torch.no_grad():
        initial_loss = sum(
            loss_fn(model(xs[i:i + 512]), ys[i:i + 512]).item() * len(xs[i:i + 512])
            for i in range(0, n, 512)) / n

    final_loss = initial_loss
    for epoch in range(config.epochs):
        model.train()
        perm = torch.randperm(n, generator=gen)
        running = 0.0
        for i in range(0, n, config.batch_size):
            idx = perm[i:i + config.batch_size]
            xb = xs[idx]
            if config.augment:
                xb = _augment_batch(xb, gen)
            opt.zero_grad()
            loss = loss_fn(model(xb), ys[idx])
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {i // config.batch_size} "
                    f"(architecture={architecture_id}, lr={lr})")
            loss.backward()
            opt.step()
            running += loss.item() * len(idx)
        sched.step()
        final_loss = running / n
    if final_loss >= initial_loss:
        raise TrainingError(
            f"training loss did not decrease ({initial_loss:.4f} -> {final_loss:.4f}); "
            "check the learning-rate schedule")
    model.eval()
    return ClassifierHandle(
        architecture_id=architecture_id,
        num_classes=dataset.num_classes,
        input_shape=dataset.sample_shape,
        parameter_digest=parameter_digest(model),
        train_seed=config.seed,
        module=model,
    )


def predict_logits(handle: ClassifierHandle, inputs: np.ndarray, batch_size: int = 512) -> np.ndarray:
    arr = np.asarray(inputs, dtype=np.float32)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.shape[1:] != tuple(handle.input_shape):
        raise ValidationError(
            f"input shape {arr.shape[1:]} does not match trained shape {handle.input_shape}")
    handle.module.eval()
    dtype = next(handle.module.parameters()).dtype
    outs = []
    with torch.no_grad():
        for i in range(0, len(arr), batch_size):
            outs.append(handle.module(_to_nchw(arr[i:i + batch_size], dtype)).cpu().numpy())
    logits = np.concatenate(outs).astype(np.float64)
    return logits[0] if single else logits


def predict(handle: ClassifierHandle, inputs: np.ndarray):
    """Argmax class indices; ties break to the lowest class index."""
    logits = predict_logits(handle, inputs)
    if logits.ndim == 1:
        return int(np.argmax(logits))
    return np.argmax(logits, axis=1).astype(np.int64)


def accuracy(handle: ClassifierHandle, dataset: LabeledDataset) -> float:
    if len(dataset) == 0:
        raise ValidationError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict(handle, dataset.inputs) == dataset.labels))


def loss_and_input_gradient(handle: ClassifierHandle, x: np.ndarray, target: int):
    """Cross-entropy of the softmax logits against target, and d(loss)/dx."""
    if not 0 <= target < handle.num_classes:
        raise ValidationError(f"target {target} out of range [0, {handle.num_classes})")
    dtype = next(handle.module.parameters()).dtype
    xt = _to_nchw(np.asarray(x), dtype).requires_grad_(True)
    handle.module.eval()
    loss = nn.functional.cross_entropy(
        handle.module(xt), torch.tensor([target], dtype=torch.long))
    grad, = torch.autograd.grad(loss, xt)
    loss_val = float(loss.detach())
    grad_np = grad[0].permute(1, 2, 0).cpu().numpy()
    if not np.isfinite(loss_val) or not np.all(np.isfinite(grad_np)):
        raise TrainingError("non-finite loss or gradient in loss_and_input_gradient")
    return loss_val, grad_np


def save_checkpoint(handle: ClassifierHandle, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(handle.module.state_dict(), directory / "model.pt")
    meta = {
        "architecture_id": handle.architecture_id,
        "num_classes": handle.num_classes,
        "input_shape": list(handle.input_shape),
        "parameter_digest": handle.parameter_digest,
        "train_seed": handle.train_seed,
    }
    (directory / "handle.json").write_text(canonical_json(meta))


def load_checkpoint(directory) -> ClassifierHandle:
    directory = Path(directory)
    for name in ("model.pt", "handle.json"):
        if not (directory / name).is_file():
            raise LoadError(f"{directory}: missing checkpoint file {name}")
    meta = json.loads((directory / "handle.json").read_text())
    model = build_model(meta["architecture_id"], meta["num_classes"],
                        tuple(meta["input_shape"]))
    state = torch.load(directory / "model.pt", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    digest = parameter_digest(model)
    if digest != meta["parameter_digest"]:
        raise IntegrityError(
            f"{directory}: checkpoint digest {digest[:12]}... does not match "
            f"recorded {meta['parameter_digest'][:12]}...")
    return ClassifierHandle(
        architecture_id=meta["architecture_id"],
        num_classes=meta["num_classes"],
        input_shape=tuple(meta["input_shape"]),
        parameter_digest=digest,
        train_seed=meta["train_seed"],
        module=model,
    )
