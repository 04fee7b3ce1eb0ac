"""Architecture registry for the classifier harness.

Every factory takes (num_classes, input_shape) with input_shape = (H, W, C)
and returns a torch module consuming NCHW batches. New architectures can be
plugged in with register_architecture.
"""

import numpy as np
import torch.nn as nn

from .errors import ValidationError


def _linear(num_classes, input_shape):
    return nn.Sequential(nn.Flatten(), nn.Linear(int(np.prod(input_shape)), num_classes))


def _mlp(num_classes, input_shape, hidden=64):
    return nn.Sequential(
        nn.Flatten(),
        nn.Linear(int(np.prod(input_shape)), hidden),
        nn.Tanh(),
        nn.Linear(hidden, num_classes),
    )


def _small_cnn(num_classes, input_shape, width=16):
    channels = input_shape[2]
    w = width
    return nn.Sequential(
        nn.Conv2d(channels, w, 3, padding=1, stride=2), nn.BatchNorm2d(w), nn.ReLU(),
        nn.Conv2d(w, 2 * w, 3, padding=1, stride=2), nn.BatchNorm2d(2 * w), nn.ReLU(),
        nn.Conv2d(2 * w, 4 * w, 3, padding=1, stride=2), nn.BatchNorm2d(4 * w), nn.ReLU(),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(), nn.Linear(4 * w, num_classes),
    )


class _BasicBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU()
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch))
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class _ResNet(nn.Module):
    """CIFAR-style residual net: 3 stages of n blocks at 16/32/64 channels."""

    def __init__(self, num_classes, input_shape, blocks_per_stage=3):
        super().__init__()
        channels = input_shape[2]
        self.stem = nn.Sequential(
            nn.Conv2d(channels, 16, 3, padding=1, bias=False),
            nn.BatchNorm2d(16), nn.ReLU())
        stages = []
        in_ch = 16
        for stage, out_ch in enumerate((16, 32, 64)):
            for b in range(blocks_per_stage):
                stride = 2 if stage > 0 and b == 0 else 1
                stages.append(_BasicBlock(in_ch, out_ch, stride))
                in_ch = out_ch
        self.stages = nn.Sequential(*stages)
        self.head = nn.Sequential(nn.AdaptiveAvgPool2d(1), nn.Flatten(),
                                  nn.Linear(64, num_classes))

    def forward(self, x):
        return self.head(self.stages(self.stem(x)))


_REGISTRY = {
    "linear": _linear,
    "mlp": _mlp,
    "small_cnn": _small_cnn,
    "resnet20": lambda m, s: _ResNet(m, s, blocks_per_stage=3),
}


def register_architecture(name: str, factory) -> None:
    _REGISTRY[name] = factory


def available_architectures():
    return sorted(_REGISTRY)


def build_model(architecture_id: str, num_classes: int, input_shape):
    if architecture_id not in _REGISTRY:
        raise ValidationError(
            f"unknown architecture {architecture_id!r}; known: {available_architectures()}")
    return _REGISTRY[architecture_id](num_classes, tuple(input_shape))
