import math

import numpy as np
import pytest
import torch

from advcrypt.classifier import (TrainConfig, accuracy, load_checkpoint,
                                 loss_and_input_gradient, predict, predict_logits,
                                 save_checkpoint, train)
from advcrypt.errors import IntegrityError, ValidationError
from advcrypt.models import available_architectures, build_model
from advcrypt.synthetic import gaussian_blob_dataset

from conftest import handle_from_module, linear_handle


def finite_difference_gradient(module, x_hwc, target, h=1e-3):
    """Central-difference input gradient, the oracle for the analytic one."""
    def loss_at(arr):
        xt = torch.from_numpy(arr[None].transpose(0, 3, 1, 2)).to(torch.float64)
        with torch.no_grad():
            return float(torch.nn.functional.cross_entropy(
                module(xt), torch.tensor([target])))

    grad = np.zeros_like(x_hwc, dtype=np.float64)
    flat = x_hwc.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += h
        up = loss_at(bumped.reshape(x_hwc.shape))
        bumped[i] -= 2 * h
        down = loss_at(bumped.reshape(x_hwc.shape))
        gflat[i] = (up - down) / (2 * h)
    return grad


class TestTrain:
    def test_blobs_linear_reaches_bayes_level(self, blob_data):
        # classes are separable by construction (mean gaps >> spread), so a
        # linear model must fit the training set nearly perfectly
        train_set, test_set = blob_data
        handle = train(train_set, "linear", TrainConfig(epochs=40, seed=1))
        assert accuracy(handle, train_set) >= 0.95
        assert accuracy(handle, test_set) >= 0.95

    def test_zero_epochs_rejected(self):
        with pytest.raises(ValidationError, match="epochs"):
            TrainConfig(epochs=0)

    def test_empty_dataset_rejected(self, blob_data):
        empty = blob_data[0].subset([])
        with pytest.raises(ValidationError):
            train(empty, "linear", TrainConfig(epochs=1))

    def test_missing_class_rejected(self, blob_data):
        train_set, _ = blob_data
        only_zero = train_set.subset(train_set.class_indices(0))
        with pytest.raises(ValidationError, match="classes"):
            train(only_zero, "linear", TrainConfig(epochs=1))

    def test_deterministic_digest(self, blob_data):
        train_set, _ = blob_data
        cfg = TrainConfig(epochs=5, seed=7)
        h1 = train(train_set, "linear", cfg)
        h2 = train(train_set, "linear", cfg)
        assert h1.parameter_digest == h2.parameter_digest

    def test_unknown_architecture(self, blob_data):
        with pytest.raises(ValidationError, match="unknown architecture"):
            train(blob_data[0], "perceptron9000", TrainConfig(epochs=1))

    def test_registry_lists_builtins(self):
        for name in ("linear", "mlp", "small_cnn", "resnet20"):
            assert name in available_architectures()


class TestPredict:
    def test_simple_argmax(self):
        # logits = x * diag-ish weights; input picks class 1
        handle = linear_handle(np.array([[0.1], [0.9], [0.1]]))
        assert predict(handle, np.full((1, 1, 1), 1.0, np.float32)) == 1

    def test_tie_breaks_to_lowest_index(self):
        handle = linear_handle(np.array([[1.0], [1.0], [0.0]]))
        assert predict(handle, np.full((1, 1, 1), 1.0, np.float32)) == 0
        zero = linear_handle(np.zeros((4, 1)))
        assert predict(zero, np.full((1, 1, 1), 0.7, np.float32)) == 0

    def test_batch_order_preserved(self, blob_data):
        train_set, _ = blob_data
        handle = train(train_set, "linear", TrainConfig(epochs=20, seed=3))
        batch = predict(handle, train_set.inputs[:10])
        singles = [predict(handle, train_set.inputs[i]) for i in range(10)]
        assert batch.tolist() == singles

    def test_purity(self, blob_data):
        train_set, _ = blob_data
        handle = train(train_set, "linear", TrainConfig(epochs=5, seed=3))
        a = predict(handle, train_set.inputs)
        b = predict(handle, train_set.inputs)
        assert np.array_equal(a, b)

    def test_shape_mismatch(self):
        handle = linear_handle(np.zeros((2, 4)), input_shape=(2, 2, 1))
        with pytest.raises(ValidationError, match="shape"):
            predict(handle, np.zeros((1, 3, 3, 1), np.float32))


class TestLossAndGradient:
    def test_uniform_logits_loss_is_log_m(self):
        for m in (2, 5, 10):
            handle = linear_handle(np.zeros((m, 4)), input_shape=(2, 2, 1))
            loss, _ = loss_and_input_gradient(
                handle, np.full((2, 2, 1), 0.4, np.float32), 0)
            assert loss == pytest.approx(math.log(m), abs=1e-6)

    def test_saturated_correct_prediction(self):
        handle = linear_handle(np.array([[50.0], [-50.0]]))
        loss, grad = loss_and_input_gradient(handle, np.full((1, 1, 1), 1.0, np.float32), 0)
        assert loss < 1e-6
        assert np.linalg.norm(grad) < 1e-4

    def test_target_out_of_range(self):
        handle = linear_handle(np.zeros((2, 1)))
        with pytest.raises(ValidationError):
            loss_and_input_gradient(handle, np.zeros((1, 1, 1), np.float32), 5)

    def test_gradient_matches_finite_differences(self):
        # the acceptance-grade oracle: 20 random probes on a 2-layer net
        torch.manual_seed(0)
        module = build_model("mlp", 4, (8, 8, 1)).double()
        handle = handle_from_module(module, "mlp", 4, (8, 8, 1))
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(20):
            x = rng.uniform(0.1, 0.9, size=(8, 8, 1))
            target = int(rng.integers(4))
            _, analytic = loss_and_input_gradient(handle, x.astype(np.float64), target)
            fd = finite_difference_gradient(module, x, target)
            rel = np.max(np.abs(analytic - fd)) / max(np.max(np.abs(fd)), 1e-12)
            worst = max(worst, rel)
        assert worst <= 1e-3

    def test_gradient_shape_matches_input(self):
        handle = linear_handle(np.zeros((3, 12)), input_shape=(2, 2, 3))
        _, grad = loss_and_input_gradient(handle, np.zeros((2, 2, 3), np.float32), 1)
        assert grad.shape == (2, 2, 3)


class TestAccuracy:
    def test_all_correct(self, blob_data):
        train_set, _ = blob_data
        handle = train(train_set, "linear", TrainConfig(epochs=40, seed=2))
        perfect = train_set.subset(
            np.flatnonzero(predict(handle, train_set.inputs) == train_set.labels))
        assert accuracy(handle, perfect) == 1.0

    def test_none_correct(self, blob_data):
        train_set, _ = blob_data
        handle = train(train_set, "linear", TrainConfig(epochs=40, seed=2))
        preds = predict(handle, train_set.inputs)
        wrong = train_set.with_inputs(train_set.inputs)
        relabeled = (wrong.labels + 1) % wrong.num_classes
        mismatched = wrong.subset(np.flatnonzero(preds == wrong.labels))
        from advcrypt.data import LabeledDataset
        flipped = LabeledDataset(mismatched.inputs,
                                 (mismatched.labels + 1) % 4, 4)
        assert accuracy(handle, flipped) == 0.0

    def test_equals_one_minus_error(self, blob_data):
        train_set, test_set = blob_data
        handle = train(train_set, "linear", TrainConfig(epochs=10, seed=2))
        acc = accuracy(handle, test_set)
        err = float(np.mean(predict(handle, test_set.inputs) != test_set.labels))
        assert acc == pytest.approx(1.0 - err)
        assert 0.0 <= acc <= 1.0

    def test_empty_dataset_rejected(self, blob_data):
        handle = train(blob_data[0], "linear", TrainConfig(epochs=5, seed=2))
        with pytest.raises(ValidationError):
            accuracy(handle, blob_data[0].subset([]))


class TestCheckpoint:
    def test_round_trip_preserves_behavior(self, tmp_path, blob_data):
        train_set, test_set = blob_data
        handle = train(train_set, "mlp", TrainConfig(epochs=10, seed=5))
        save_checkpoint(handle, tmp_path / "ck")
        loaded = load_checkpoint(tmp_path / "ck")
        assert loaded.parameter_digest == handle.parameter_digest
        assert np.array_equal(predict(loaded, test_set.inputs),
                              predict(handle, test_set.inputs))

    def test_tampered_weights_detected(self, tmp_path, blob_data):
        handle = train(blob_data[0], "linear", TrainConfig(epochs=5, seed=5))
        save_checkpoint(handle, tmp_path / "ck")
        state = torch.load(tmp_path / "ck" / "model.pt", weights_only=True)
        key = next(iter(state))
        state[key] = state[key] + 1.0
        torch.save(state, tmp_path / "ck" / "model.pt")
        with pytest.raises(IntegrityError, match="digest"):
            load_checkpoint(tmp_path / "ck")


def test_logits_width_matches_num_classes(blob_data):
    handle = train(blob_data[0], "mlp", TrainConfig(epochs=5, seed=1))
    logits = predict_logits(handle, blob_data[0].inputs[:3])
    assert logits.shape == (3, 4)
