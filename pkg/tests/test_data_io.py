import json

import numpy as np
import pytest
from PIL import Image

from advcrypt.data import (CIFAR10_CLASS_NAMES, DatasetManifest, LabeledDataset,
                           export_images_8bit, load_cifar10, load_dataset,
                           load_encrypted, load_image_folder, save_encrypted, split)
from advcrypt.errors import IntegrityError, LoadError, ValidationError
from advcrypt.synthetic import textured_image_dataset, TextureSpec, write_cifar10_batches


def tiny_dataset(n=10, num_classes=2, seed=0, shape=(3, 3, 1)):
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0, 1, size=(n, *shape)).astype(np.float32)
    ys = np.arange(n) % num_classes
    return LabeledDataset(xs, ys, num_classes)


class TestLabeledDataset:
    def test_rejects_out_of_range_values(self):
        xs = np.full((2, 2, 2, 1), 1.5, dtype=np.float32)
        with pytest.raises(ValidationError):
            LabeledDataset(xs, [0, 1], 2)

    def test_rejects_bad_labels(self):
        xs = np.zeros((2, 2, 2, 1), dtype=np.float32)
        with pytest.raises(ValidationError):
            LabeledDataset(xs, [0, 5], 2)

    def test_rejects_length_mismatch(self):
        xs = np.zeros((2, 2, 2, 1), dtype=np.float32)
        with pytest.raises(ValidationError):
            LabeledDataset(xs, [0], 2)

    def test_immutable(self):
        ds = tiny_dataset()
        with pytest.raises(ValueError):
            ds.inputs[0, 0, 0, 0] = 0.3
        with pytest.raises(ValueError):
            ds.labels[0] = 1

    def test_subset_and_class_indices(self):
        ds = tiny_dataset(n=10, num_classes=2)
        evens = ds.class_indices(0)
        assert (ds.labels[evens] == 0).all()
        sub = ds.subset(evens)
        assert len(sub) == len(evens)
        assert (sub.labels == 0).all()


class TestCifar10Loader:
    def test_single_record_layout(self, tmp_path):
        # one record: label 3, R plane all 10, G all 20, B all 30
        rec = bytes([3]) + bytes([10] * 1024) + bytes([20] * 1024) + bytes([30] * 1024)
        d = tmp_path / "cifar"
        d.mkdir()
        (d / "test_batch.bin").write_bytes(rec)
        ds = load_cifar10(d, split="test")
        assert len(ds) == 1
        assert ds.labels[0] == 3
        assert ds.sample_shape == (32, 32, 3)
        expected = np.array([10, 20, 30], dtype=np.float32) / np.float32(255)
        assert np.array_equal(ds.inputs[0, 0, 0], expected)
        assert ds.class_names == CIFAR10_CLASS_NAMES

    def test_round_trip_through_writer(self, tmp_path):
        spec = TextureSpec(templates_per_class=2)
        train = textured_image_dataset(3, sample_seed=1, spec=spec)
        test = textured_image_dataset(2, sample_seed=2, spec=spec)
        write_cifar10_batches(train, tmp_path, test_dataset=test)
        loaded_train = load_dataset({"format": "cifar10", "path": str(tmp_path), "split": "train"})
        loaded_test = load_dataset({"format": "cifar10", "path": str(tmp_path), "split": "test"})
        assert len(loaded_train) == len(train)
        assert len(loaded_test) == len(test)
        # generator already quantizes to the 8-bit grid, so this is lossless
        assert np.array_equal(np.sort(loaded_train.labels), np.sort(train.labels))
        assert loaded_train.inputs.min() >= 0.0 and loaded_train.inputs.max() <= 1.0

    def test_missing_files(self, tmp_path):
        with pytest.raises(LoadError, match="missing"):
            load_cifar10(tmp_path, split="train")

    def test_truncated_record(self, tmp_path):
        (tmp_path / "test_batch.bin").write_bytes(b"\x00" * 100)
        with pytest.raises(LoadError, match="3073"):
            load_cifar10(tmp_path, split="test")


class TestImageFolder:
    def _write_folder(self, root, classes, value=128, size=8, n_each=4):
        for name in classes:
            (root / name).mkdir(parents=True)
            for i in range(n_each):
                arr = np.full((size, size), value, dtype=np.uint8)
                Image.fromarray(arr, mode="L").save(root / name / f"{i}.png")

    def test_gray_pixel_scaling_exact(self, tmp_path):
        # 3 classes x 4 identical gray PNGs; 128 scales to exactly 128/255
        self._write_folder(tmp_path, ["a", "b", "c"], value=128)
        ds = load_image_folder(tmp_path)
        assert len(ds) == 12
        assert ds.sample_shape == (8, 8, 1)
        expected = np.float32(128) / np.float32(255)
        assert np.all(ds.inputs == expected)

    def test_lexicographic_class_order(self, tmp_path):
        self._write_folder(tmp_path, ["zebra", "ant", "mouse"], n_each=1)
        ds = load_image_folder(tmp_path)
        assert ds.class_names == ("ant", "mouse", "zebra")

    def test_empty_tree(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        with pytest.raises(LoadError, match="no images"):
            load_image_folder(tmp_path)

    def test_inconsistent_shapes(self, tmp_path):
        (tmp_path / "a").mkdir()
        Image.fromarray(np.zeros((8, 8), np.uint8)).save(tmp_path / "a" / "0.png")
        Image.fromarray(np.zeros((9, 9), np.uint8)).save(tmp_path / "a" / "1.png")
        with pytest.raises(LoadError, match="shape"):
            load_image_folder(tmp_path)

    def test_undecodable_image(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "a" / "bad.png").write_bytes(b"not a png at all")
        with pytest.raises(LoadError, match="undecodable"):
            load_image_folder(tmp_path)


class TestSplit:
    def make_counted(self, counts):
        xs, ys = [], []
        for c, n in enumerate(counts):
            xs.append(np.full((n, 1, 1, 1), 0.5, dtype=np.float32))
            ys.append(np.full(n, c))
        return LabeledDataset(np.concatenate(xs), np.concatenate(ys), len(counts))

    def test_reported_per_class_counts(self):
        # five classes sized like a small clinical set; 20% test per class
        totals = (1098, 1436, 676, 1813, 291)
        expected_test = (219, 287, 135, 362, 58)
        ds = self.make_counted(totals)
        train, test = split(ds, 0.2, seed=3)
        got = tuple(int(np.sum(test.labels == c)) for c in range(5))
        assert got == expected_test
        got_train = tuple(int(np.sum(train.labels == c)) for c in range(5))
        assert got_train == tuple(t - e for t, e in zip(totals, expected_test))

    def test_two_samples_half(self):
        ds = self.make_counted((2, 2, 2))
        train, test = split(ds, 0.5, seed=0)
        for c in range(3):
            assert np.sum(train.labels == c) == 1
            assert np.sum(test.labels == c) == 1

    def test_deterministic(self):
        ds = tiny_dataset(n=40, num_classes=4, seed=5)
        a = split(ds, 0.25, seed=9)
        b = split(ds, 0.25, seed=9)
        assert np.array_equal(a[0].inputs, b[0].inputs)
        assert np.array_equal(a[1].inputs, b[1].inputs)

    def test_disjoint_and_complete(self):
        # tag every sample with a unique value so membership is checkable
        n = 30
        xs = (np.arange(n, dtype=np.float32) / n).reshape(n, 1, 1, 1)
        ds = LabeledDataset(xs, np.arange(n) % 3, 3)
        train, test = split(ds, 0.3, seed=1)
        train_vals = set(train.inputs.reshape(-1).tolist())
        test_vals = set(test.inputs.reshape(-1).tolist())
        assert not train_vals & test_vals
        assert len(train_vals | test_vals) == n

    @pytest.mark.parametrize("fraction", [0.1, 0.2, 0.5])
    def test_proportions_within_one_sample(self, fraction):
        ds = tiny_dataset(n=101, num_classes=3, seed=2)
        _, test = split(ds, fraction, seed=0)
        for c in range(3):
            n_c = int(np.sum(ds.labels == c))
            assert abs(int(np.sum(test.labels == c)) - fraction * n_c) <= 1

    def test_small_class_rejected(self):
        ds = self.make_counted((5, 1))
        with pytest.raises(ValidationError, match="class 1"):
            split(ds, 0.5, seed=0)


class TestEncryptedContainer:
    def manifest(self, ds, digest=""):
        return DatasetManifest(
            dataset_name="t", shape=ds.sample_shape, num_classes=ds.num_classes,
            recipe_digest=digest, seed=0, created_from="unit-test")

    def test_round_trip_bit_exact(self, tmp_path):
        ds = tiny_dataset(n=7, seed=3)
        save_encrypted(ds, self.manifest(ds), tmp_path / "enc")
        loaded, manifest = load_encrypted(tmp_path / "enc")
        assert np.array_equal(loaded.inputs, ds.inputs)
        assert loaded.inputs.tobytes() == ds.inputs.tobytes()
        assert np.array_equal(loaded.labels, ds.labels)
        assert manifest.created_from == "unit-test"

    def test_double_round_trip_idempotent(self, tmp_path):
        ds = tiny_dataset(n=5, seed=4)
        save_encrypted(ds, self.manifest(ds), tmp_path / "one")
        first, m1 = load_encrypted(tmp_path / "one")
        save_encrypted(first, m1, tmp_path / "two")
        second, _ = load_encrypted(tmp_path / "two")
        assert second.inputs.tobytes() == ds.inputs.tobytes()

    def test_shape_tamper_detected(self, tmp_path):
        ds = tiny_dataset()
        save_encrypted(ds, self.manifest(ds), tmp_path / "enc")
        meta = json.loads((tmp_path / "enc" / "meta.json").read_text())
        meta["shape"] = [2, 2, 1]
        (tmp_path / "enc" / "meta.json").write_text(json.dumps(meta))
        with pytest.raises(LoadError):
            load_encrypted(tmp_path / "enc")

    def test_payload_tamper_detected(self, tmp_path):
        ds = tiny_dataset()
        save_encrypted(ds, self.manifest(ds), tmp_path / "enc")
        raw = bytearray((tmp_path / "enc" / "data.f32").read_bytes())
        raw[0] ^= 0xFF
        (tmp_path / "enc" / "data.f32").write_bytes(bytes(raw))
        with pytest.raises(IntegrityError, match="digest"):
            load_encrypted(tmp_path / "enc")

    def test_malformed_recipe_digest_rejected(self, tmp_path):
        ds = tiny_dataset()
        save_encrypted(ds, self.manifest(ds, digest="zz-not-a-digest"), tmp_path / "enc")
        with pytest.raises(IntegrityError, match="recipe_digest"):
            load_encrypted(tmp_path / "enc")

    def test_missing_file(self, tmp_path):
        ds = tiny_dataset()
        save_encrypted(ds, self.manifest(ds), tmp_path / "enc")
        (tmp_path / "enc" / "meta.json").unlink()
        with pytest.raises(LoadError, match="meta.json"):
            load_encrypted(tmp_path / "enc")

    def test_values_in_unit_interval_after_load(self, tmp_path):
        ds = tiny_dataset(n=20, seed=8)
        save_encrypted(ds, self.manifest(ds), tmp_path / "enc")
        loaded, _ = load_encrypted(tmp_path / "enc")
        assert loaded.inputs.min() >= 0.0
        assert loaded.inputs.max() <= 1.0


class TestLossyExport:
    def test_export_flags_manifest_lossy(self, tmp_path):
        ds = tiny_dataset(n=6, num_classes=2)
        manifest = DatasetManifest(
            dataset_name="t", shape=ds.sample_shape, num_classes=2,
            recipe_digest="", seed=0, created_from="test")
        out = export_images_8bit(ds, manifest, tmp_path / "img")
        assert out.lossy is True
        stored = json.loads((tmp_path / "img" / "manifest.json").read_text())
        assert stored["lossy"] is True
        reloaded = load_image_folder(tmp_path / "img")
        assert len(reloaded) == 6


def test_manifest_digest_deterministic():
    from advcrypt.utils import digest_of
    m = DatasetManifest("d", (2, 2, 1), 2, "", 0, "x")
    assert digest_of(m.to_dict()) == digest_of(m.to_dict())
