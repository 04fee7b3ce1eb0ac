import numpy as np
import pytest
import torch

from advcrypt.classifier import ClassifierHandle, parameter_digest
from advcrypt.models import build_model
from advcrypt.synthetic import gaussian_blob_dataset


def handle_from_module(module, architecture_id, num_classes, input_shape,
                       train_seed=0) -> ClassifierHandle:
    """Wrap a hand-built torch module so tests can control logits exactly."""
    module.eval()
    return ClassifierHandle(
        architecture_id=architecture_id,
        num_classes=num_classes,
        input_shape=tuple(input_shape),
        parameter_digest=parameter_digest(module),
        train_seed=train_seed,
        module=module,
    )


def linear_handle(weight, bias=None, input_shape=(1, 1, 1)) -> ClassifierHandle:
    """Linear-logit classifier with explicit weights.

    weight: (num_classes, D) where D = prod(input_shape). Inputs are
    flattened in (H, W, C) order before the matmul, matching how the
    harness converts datasets.
    """
    weight = np.asarray(weight, dtype=np.float32)
    m, dim = weight.shape
    module = build_model("linear", m, input_shape)
    # harness feeds NCHW, so Flatten sees (C, H, W); reorder columns to match
    h, w, c = input_shape
    perm = np.arange(dim).reshape(h, w, c).transpose(2, 0, 1).reshape(-1)
    with torch.no_grad():
        module[1].weight.copy_(torch.from_numpy(weight[:, perm]))
        module[1].bias.copy_(torch.zeros(m) if bias is None
                             else torch.as_tensor(bias, dtype=torch.float32))
    return handle_from_module(module, "linear", m, input_shape)


@pytest.fixture(scope="session")
def blob_data():
    """Small well-separated 4-class blob dataset, shared across tests."""
    train = gaussian_blob_dataset(4, 60, seed=10)
    test = gaussian_blob_dataset(4, 25, seed=11)
    return train, test
