"""Synthetic image datasets for demos, tests, and desk-scale experiments.

Two families: Gaussian blobs rendered as tiny images (linearly separable,
for planted-recovery experiments), and textured images built from per-class
smooth templates over a cluttered background (convnet-scale, CIFAR-like).
A writer for CIFAR-10-format binary batches lets the generated data flow
through the standard ingestion path.
"""

import dataclasses
from pathlib import Path

import numpy as np
import torch

from .data import LabeledDataset
from .errors import ValidationError


def blob_class_means(num_classes: int, dim: int, class_seed: int = 0,
                     min_distance: float = 0.9) -> np.ndarray:
    """Rejection-sample class means inside the [0.2, 0.8] cube."""
    rng = np.random.default_rng(class_seed)
    means = []
    while len(means) < num_classes:
        cand = rng.uniform(0.2, 0.8, size=dim)
        if all(np.linalg.norm(cand - m) > min_distance for m in means):
            means.append(cand)
    return np.stack(means)


def gaussian_blob_dataset(num_classes: int, samples_per_class: int, seed: int,
                          shape=(4, 4, 1), spread: float = 0.04,
                          class_seed: int = 0,
                          mean_shift: float = 0.0) -> LabeledDataset:
    """Well-separated Gaussian clusters rendered as small images.

    The class means depend only on class_seed, so different sample seeds
    draw fresh splits of the same classes; a linear model separates them
    essentially perfectly. mean_shift displaces every mean by that amount
    along a fixed random direction (for domain-shift experiments).
    """
    dim = int(np.prod(shape))
    means = blob_class_means(num_classes, dim, class_seed)
    if mean_shift:
        rng_shift = np.random.default_rng([class_seed, 77])
        direction = rng_shift.standard_normal(dim)
        means = means + mean_shift * direction / np.linalg.norm(direction)
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for c in range(num_classes):
        pts = means[c] + rng.standard_normal((samples_per_class, dim)) * spread
        xs.append(np.clip(pts, 0.0, 1.0))
        ys.append(np.full(samples_per_class, c))
    xs = np.concatenate(xs).astype(np.float32).reshape(-1, *shape)
    ys = np.concatenate(ys)
    perm = rng.permutation(len(xs))
    return LabeledDataset(xs[perm], ys[perm], num_classes)


@dataclasses.dataclass(frozen=True)
class TextureSpec:
    """Knobs for the textured generator; defaults give a 10-class set a
    small convnet learns to ~0.93 while staying vulnerable to feature-level
    perturbation."""

    num_classes: int = 10
    image_size: int = 32
    channels: int = 3
    templates_per_class: int = 5
    template_cell: int = 8
    template_amplitude: float = 2.9
    background_cell: int = 4
    background_amplitude: float = 1.55
    noise: float = 0.06
    max_shift: int = 5
    class_seed: int = 42


def _smooth_field(rng, size, cell, channels, amplitude):
    coarse = rng.standard_normal((channels, cell, cell)).astype(np.float32)
    field = torch.nn.functional.interpolate(
        torch.from_numpy(coarse)[None], size=(size, size),
        mode="bilinear", align_corners=True)[0].numpy()
    return field / max(np.linalg.norm(field), 1e-9) * amplitude


def _class_templates(spec: TextureSpec):
    rng = np.random.default_rng(spec.class_seed)
    return np.stack([
        np.stack([
            _smooth_field(rng, spec.image_size, spec.template_cell,
                          spec.channels, spec.template_amplitude)
            for _ in range(spec.templates_per_class)
        ])
        for _ in range(spec.num_classes)
    ])


def textured_image_dataset(samples_per_class: int, sample_seed: int,
                           spec: TextureSpec = TextureSpec()) -> LabeledDataset:
    """Per-class template + per-sample background clutter + pixel noise.

    The class templates are a pure function of spec.class_seed, so two calls
    with different sample seeds draw train/test splits of the same classes.
    Pixels are quantized to the 8-bit grid, matching image-file ingestion.
    """
    templates = _class_templates(spec)
    rng = np.random.default_rng(sample_seed)
    xs = np.empty((spec.num_classes * samples_per_class,
                   spec.image_size, spec.image_size, spec.channels), dtype=np.float32)
    ys = np.empty(spec.num_classes * samples_per_class, dtype=np.int64)
    i = 0
    for c in range(spec.num_classes):
        for _ in range(samples_per_class):
            t = templates[c, rng.integers(spec.templates_per_class)] * rng.uniform(0.7, 1.3)
            t = np.roll(t, (rng.integers(-spec.max_shift, spec.max_shift + 1),
                            rng.integers(-spec.max_shift, spec.max_shift + 1)),
                        axis=(1, 2))
            b = _smooth_field(rng, spec.image_size, spec.background_cell,
                              spec.channels, spec.background_amplitude)
            x = 0.5 + t + b
            x += rng.standard_normal(x.shape).astype(np.float32) * spec.noise
            x = np.round(np.clip(x, 0.0, 1.0) * 255.0) / 255.0
            xs[i] = x.transpose(1, 2, 0)
            ys[i] = c
            i += 1
    perm = np.random.default_rng(sample_seed + 1).permutation(len(xs))
    return LabeledDataset(xs[perm], ys[perm], spec.num_classes)


def write_cifar10_batches(dataset: LabeledDataset, directory,
                          test_dataset=None) -> None:
    """Export a 10-class 32x32x3 dataset as CIFAR-10 binary batches.

    Pixels are quantized to uint8 (the CIFAR container is 8-bit), so route
    only original (pre-encryption) data through this writer.
    """
    if dataset.num_classes != 10 or dataset.sample_shape != (32, 32, 3):
        raise ValidationError("CIFAR-10 format requires 10 classes of 32x32x3 images")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def write_records(ds, path):
        pixels = np.clip(np.round(ds.inputs * 255.0), 0, 255).astype(np.uint8)
        planar = pixels.transpose(0, 3, 1, 2).reshape(len(ds), -1)
        records = np.concatenate(
            [ds.labels.astype(np.uint8)[:, None], planar], axis=1)
        path.write_bytes(records.tobytes())

    if len(dataset) < 5:
        raise ValidationError("need at least 5 samples to fill the 5 train batches")
    for b, idx in enumerate(np.array_split(np.arange(len(dataset)), 5)):
        write_records(dataset.subset(idx), directory / f"data_batch_{b + 1}.bin")
    if test_dataset is not None:
        write_records(test_dataset, directory / "test_batch.bin")
