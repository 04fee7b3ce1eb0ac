"""Dataset ingestion, stratified splitting, and bit-exact persistence.

Datasets are immutable collections of (H, W, C) float32 tensors with values
in [0, 1] plus integer class labels. Encrypted datasets are persisted as raw
little-endian float32 payloads with JSON sidecars so a save/load round trip
is exact at the bit level; 8-bit image export is available but lossy.
"""

import dataclasses
import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IntegrityError, LoadError, ValidationError
from .utils import array_digest, canonical_json

CIFAR10_CLASS_NAMES = (
    "airplane", "automobile", "bird", "cat", "deer",
    "dog", "frog", "horse", "ship", "truck",
)

_IMAGE_EXTENSIONS = (".png", ".bmp")


class LabeledDataset:
    """Immutable (inputs, labels) collection with class metadata.

    inputs: float32 array of shape (N, H, W, C), values in [0, 1].
    labels: int64 array of shape (N,), values in [0, num_classes).
    """

    def __init__(self, inputs, labels, num_classes, class_names=None):
        inputs = np.ascontiguousarray(inputs, dtype=np.float32)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        if inputs.ndim != 4:
            raise ValidationError(f"inputs must be (N, H, W, C), got shape {inputs.shape}")
        if labels.ndim != 1 or len(labels) != len(inputs):
            raise ValidationError(
                f"labels must be 1-D with len(inputs)={len(inputs)}, got shape {labels.shape}")
        if num_classes < 1:
            raise ValidationError(f"num_classes must be >= 1, got {num_classes}")
        if len(labels) and (labels.min() < 0 or labels.max() >= num_classes):
            raise ValidationError(
                f"labels must lie in [0, {num_classes}), got range "
                f"[{labels.min()}, {labels.max()}]")
        if len(inputs) and (inputs.min() < 0.0 or inputs.max() > 1.0):
            raise ValidationError(
                f"input values must lie in [0, 1], got range "
                f"[{inputs.min():.6g}, {inputs.max():.6g}]")
        if class_names is not None:
            class_names = tuple(class_names)
            if len(class_names) != num_classes:
                raise ValidationError(
                    f"expected {num_classes} class names, got {len(class_names)}")
        inputs.setflags(write=False)
        labels.setflags(write=False)
        self._inputs = inputs
        self._labels = labels
        self._num_classes = int(num_classes)
        self._class_names = class_names

    @property
    def inputs(self) -> np.ndarray:
        return self._inputs

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def num_classes(self) -> int:
        return self._num_classes

    @property
    def class_names(self):
        return self._class_names

    @property
    def sample_shape(self):
        return tuple(self._inputs.shape[1:])

    def __len__(self) -> int:
        return len(self._inputs)

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self._inputs[indices], self._labels[indices],
                              self._num_classes, self._class_names)

    def class_indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self._labels == label)

    def with_inputs(self, inputs) -> "LabeledDataset":
        """New dataset with replaced input tensors and identical labels."""
        return LabeledDataset(inputs, self._labels, self._num_classes, self._class_names)

    def digest(self) -> str:
        """Content hash over the float payload and labels."""
        return array_digest(self._inputs, self._labels)


@dataclasses.dataclass(frozen=True)
class DatasetManifest:
    """Provenance sidecar stored next to every persisted dataset."""

    dataset_name: str
    shape: tuple
    num_classes: int
    recipe_digest: str  # empty string for original (unencrypted) data
    seed: int
    created_from: str
    lossy: bool = False

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["shape"] = list(self.shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            dataset_name=d["dataset_name"],
            shape=tuple(d["shape"]),
            num_classes=int(d["num_classes"]),
            recipe_digest=d["recipe_digest"],
            seed=int(d["seed"]),
            created_from=d["created_from"],
            lossy=bool(d.get("lossy", False)),
        )


def load_dataset(source_spec) -> LabeledDataset:
    """Load a dataset from a source descriptor.

    source_spec is a mapping with a "format" key:
      {"format": "cifar10", "path": dir, "split": "train"|"test"}
      {"format": "image_folder", "path": dir}
      {"format": "encrypted", "path": dir}
    """
    if not isinstance(source_spec, dict) or "format" not in source_spec:
        raise ValidationError(f"source spec must be a mapping with a 'format' key: {source_spec!r}")
    fmt = source_spec["format"]
    path = source_spec.get("path")
    if path is None:
        raise ValidationError("source spec is missing 'path'")
    if fmt == "cifar10":
        return load_cifar10(path, source_spec.get("split", "train"))
    if fmt == "image_folder":
        return load_image_folder(path)
    if fmt == "encrypted":
        dataset, _ = load_encrypted(path)
        return dataset
    raise ValidationError(f"unknown dataset format {fmt!r}")


def load_cifar10(directory, split: str = "train") -> LabeledDataset:
    """Load CIFAR-10 binary batches (3073-byte records, channel-planar pixels)."""
    directory = Path(directory)
    if split == "train":
        names = [f"data_batch_{i}.bin" for i in range(1, 6)]
    elif split == "test":
        names = ["test_batch.bin"]
    else:
        raise ValidationError(f"split must be 'train' or 'test', got {split!r}")
    paths = [directory / n for n in names]
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise LoadError(f"missing CIFAR-10 batch files: {missing}")
    record = 3073
    all_inputs, all_labels = [], []
    for p in paths:
        raw = np.fromfile(p, dtype=np.uint8)
        if len(raw) == 0 or len(raw) % record != 0:
            raise LoadError(f"{p}: size {len(raw)} is not a multiple of {record}-byte records")
        rows = raw.reshape(-1, record)
        labels = rows[:, 0].astype(np.int64)
        if labels.max() > 9:
            raise LoadError(f"{p}: label byte {labels.max()} out of range for CIFAR-10")
        # channel-planar 3x1024 -> (H, W, C)
        pixels = rows[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
        all_inputs.append(pixels)
        all_labels.append(labels)
    inputs = np.concatenate(all_inputs).astype(np.float32) / 255.0
    labels = np.concatenate(all_labels)
    return LabeledDataset(inputs, labels, 10, CIFAR10_CLASS_NAMES)


def load_image_folder(directory) -> LabeledDataset:
    """Load a one-subdirectory-per-class tree of PNG/BMP images.

    Class indices are assigned in lexicographic order of the folder names.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise LoadError(f"no such directory: {directory}")
    class_dirs = sorted(d for d in directory.iterdir() if d.is_dir())
    if not class_dirs:
        raise LoadError(f"{directory}: no class subdirectories")
    inputs, labels = [], []
    shape = None
    for idx, cdir in enumerate(class_dirs):
        files = sorted(p for p in cdir.iterdir()
                       if p.suffix.lower() in _IMAGE_EXTENSIONS)
        for f in files:
            try:
                with Image.open(f) as img:
                    if img.mode not in ("L", "RGB"):
                        img = img.convert("RGB" if ("A" in img.mode or len(img.mode) > 2) else "L")
                    arr = np.asarray(img, dtype=np.uint8)
            except OSError as exc:
                raise LoadError(f"{f}: undecodable image ({exc})") from exc
            if arr.ndim == 2:
                arr = arr[:, :, None]
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise LoadError(
                    f"{f}: shape {arr.shape} differs from first image shape {shape}")
            inputs.append(arr)
            labels.append(idx)
    if not inputs:
        raise LoadError(f"{directory}: no images found under class folders")
    inputs = np.stack(inputs).astype(np.float32) / 255.0
    return LabeledDataset(inputs, np.asarray(labels), len(class_dirs),
                          tuple(d.name for d in class_dirs))


def split(dataset: LabeledDataset, test_fraction: float, seed: int):
    """Stratified train/test split.

    Per class, floor(test_fraction * count) samples go to the test side
    (the floor rule matches reported per-class test counts); the shuffle is
    deterministic given the seed.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    train_idx, test_idx = [], []
    for c in range(dataset.num_classes):
        idx = dataset.class_indices(c)
        if len(idx) < 2:
            raise ValidationError(f"class {c} has {len(idx)} samples; need >= 2 to split")
        rng = np.random.default_rng([seed, c])
        idx = rng.permutation(idx)
        n_test = int(np.floor(test_fraction * len(idx)))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return dataset.subset(train_idx), dataset.subset(test_idx)


def save_encrypted(dataset: LabeledDataset, manifest: DatasetManifest, path) -> None:
    """Persist a dataset as raw float32 plus JSON sidecars.

    Layout: <path>/data.f32 (little-endian, C-order), <path>/meta.json,
    <path>/manifest.json. The float payload round-trips bit-exactly.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(dataset.inputs, dtype="<f4")
    (path / "data.f32").write_bytes(payload.tobytes())
    meta = {
        "count": len(dataset),
        "shape": list(dataset.sample_shape),
        "dtype": "<f4",
        "num_classes": dataset.num_classes,
        "class_names": list(dataset.class_names) if dataset.class_names else None,
        "labels": dataset.labels.tolist(),
        "payload_sha256": array_digest(payload),
    }
    (path / "meta.json").write_text(canonical_json(meta))
    (path / "manifest.json").write_text(canonical_json(manifest.to_dict()))


def load_encrypted(path):
    """Load a dataset saved by save_encrypted; verifies payload digest."""
    path = Path(path)
    for name in ("data.f32", "meta.json", "manifest.json"):
        if not (path / name).is_file():
            raise LoadError(f"{path}: missing container file {name}")
    try:
        meta = json.loads((path / "meta.json").read_text())
        manifest = DatasetManifest.from_dict(json.loads((path / "manifest.json").read_text()))
    except (json.JSONDecodeError, KeyError) as exc:
        raise LoadError(f"{path}: corrupt sidecar ({exc})") from exc
    if manifest.recipe_digest and not _is_hex_digest(manifest.recipe_digest):
        raise IntegrityError(
            f"{path}: manifest recipe_digest {manifest.recipe_digest!r} is not a sha256 hex digest")
    raw = (path / "data.f32").read_bytes()
    shape = (meta["count"], *meta["shape"])
    expected_bytes = int(np.prod(shape)) * 4
    if len(raw) != expected_bytes:
        raise LoadError(
            f"{path}: payload is {len(raw)} bytes but sidecar shape {shape} needs {expected_bytes}")
    payload = np.frombuffer(raw, dtype="<f4").reshape(shape)
    if array_digest(payload) != meta["payload_sha256"]:
        raise IntegrityError(f"{path}: payload digest does not match sidecar")
    if tuple(meta["shape"]) != tuple(manifest.shape):
        raise LoadError(
            f"{path}: meta shape {meta['shape']} != manifest shape {list(manifest.shape)}")
    dataset = LabeledDataset(payload, np.asarray(meta["labels"]), meta["num_classes"],
                             meta["class_names"])
    return dataset, manifest


def export_images_8bit(dataset: LabeledDataset, manifest: DatasetManifest, path) -> DatasetManifest:
    """Lossy 8-bit PNG export, one folder per class. Marks the manifest lossy:
    quantization perturbs the perturbation signal and must not feed back into
    the pipeline.
    """
    path = Path(path)
    lossy_manifest = dataclasses.replace(manifest, lossy=True)
    names = dataset.class_names or tuple(f"class_{c}" for c in range(dataset.num_classes))
    for c in range(dataset.num_classes):
        (path / names[c]).mkdir(parents=True, exist_ok=True)
    counters = [0] * dataset.num_classes
    for x, y in zip(dataset.inputs, dataset.labels):
        arr = np.clip(np.round(x * 255.0), 0, 255).astype(np.uint8)
        img = Image.fromarray(arr[:, :, 0] if arr.shape[2] == 1 else arr)
        img.save(path / names[y] / f"{counters[y]:06d}.png")
        counters[y] += 1
    (path / "manifest.json").write_text(canonical_json(lossy_manifest.to_dict()))
    return lossy_manifest


def _is_hex_digest(s: str) -> bool:
    return len(s) == 64 and all(ch in "0123456789abcdef" for ch in s)
