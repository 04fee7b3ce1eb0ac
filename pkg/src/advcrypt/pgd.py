"""L2-constrained targeted projected gradient descent.

Each step moves against the gradient of the targeted cross-entropy by a
fixed L2 length, then projects back onto the epsilon-ball around the
original input and clips to the valid pixel range. Iterates start at the
original input (no random start) so encryption is deterministic.
"""

import dataclasses

import numpy as np
import torch
import torch.nn as nn

from .classifier import ClassifierHandle, _to_nchw
from .errors import AttackError, ValidationError

STATIONARY_GRAD_NORM = 1e-12


@dataclasses.dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    step_size: float
    iterations: int
    norm: str = "l2"
    clip_min: float = 0.0
    clip_max: float = 1.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValidationError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.iterations < 0:
            raise ValidationError(f"iterations must be >= 0, got {self.iterations}")
        if self.iterations > 0 and self.step_size <= 0:
            raise ValidationError(f"step_size must be > 0, got {self.step_size}")
        if self.norm != "l2":
            raise ValidationError(f"only the l2 norm is implemented, got {self.norm!r}")
        if self.clip_min is not None and self.clip_max is not None \
                and self.clip_min >= self.clip_max:
            raise ValidationError(f"empty clip range [{self.clip_min}, {self.clip_max}]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        return cls(**d)


def project_l2(x_prime: np.ndarray, center: np.ndarray, epsilon: float) -> np.ndarray:
    """Project x_prime onto the epsilon-ball (L2) around center.

    Points within float rounding of the boundary count as inside, so
    projecting twice returns the first result bitwise.
    """
    x_prime = np.asarray(x_prime, dtype=np.float32)
    center = np.asarray(center, dtype=np.float32)
    if x_prime.shape != center.shape:
        raise ValidationError(f"shape mismatch {x_prime.shape} vs {center.shape}")
    delta = x_prime - center
    norm = float(np.linalg.norm(delta))
    if norm <= epsilon * (1.0 + 1e-6):
        return x_prime
    return center + delta * (epsilon / norm)


def pgd_targeted(handle: ClassifierHandle, x: np.ndarray, target: int,
                 config: AttackConfig) -> np.ndarray:
    """Perturb a single input toward the target class under the L2 budget."""
    out = pgd_targeted_batch(handle, np.asarray(x, dtype=np.float32)[None],
                             np.asarray([target]), config)
    return out[0]


def pgd_targeted_batch(handle: ClassifierHandle, xs: np.ndarray, targets: np.ndarray,
                       config: AttackConfig, batch_size: int = 256,
                       step_hook=None) -> np.ndarray:
    """Vectorized attack over a batch; per-sample results are independent.

    step_hook, if given, is called as step_hook(iteration, step_l2_norms)
    with the L2 length of each sample's pre-projection move.
    """
    xs = np.asarray(xs, dtype=np.float32)
    targets = np.asarray(targets, dtype=np.int64)
    if xs.ndim != 4:
        raise ValidationError(f"expected batched inputs (N, H, W, C), got shape {xs.shape}")
    if len(targets) != len(xs):
        raise ValidationError(f"{len(xs)} inputs but {len(targets)} targets")
    if np.any(targets < 0) or np.any(targets >= handle.num_classes):
        raise ValidationError(f"targets must lie in [0, {handle.num_classes})")
    if xs.shape[1:] != tuple(handle.input_shape):
        raise ValidationError(
            f"input shape {xs.shape[1:]} does not match trained shape {handle.input_shape}")
    if config.iterations == 0 or config.epsilon == 0.0:
        return xs.copy()

    handle.module.eval()
    loss_fn = nn.CrossEntropyLoss(reduction="sum")
    out = np.empty_like(xs)
    for start in range(0, len(xs), batch_size):
        xb = _to_nchw(xs[start:start + batch_size])
        tb = torch.from_numpy(targets[start:start + batch_size])
        out[start:start + batch_size] = _attack_chunk(
            handle.module, loss_fn, xb, tb, config, start, step_hook
        ).permute(0, 2, 3, 1).numpy()
    return out


def _attack_chunk(module, loss_fn, x0, tb, config, index_offset, step_hook):
    xa = x0.clone()
    active = torch.ones(len(x0), dtype=torch.bool)
    for it in range(config.iterations):
        xa = xa.detach().requires_grad_(True)
        loss = loss_fn(module(xa), tb)
        grad, = torch.autograd.grad(loss, xa)
        if not torch.all(torch.isfinite(grad)):
            bad = torch.nonzero(~torch.isfinite(grad.flatten(1)).all(dim=1)).flatten()
            raise AttackError(
                f"non-finite gradient at iteration {it} for sample indices "
                f"{(bad + index_offset).tolist()}")
        gnorm = grad.flatten(1).norm(dim=1)
        active = active & (gnorm >= STATIONARY_GRAD_NORM)
        if not torch.any(active):
            break
        scale = torch.where(active, config.step_size / gnorm.clamp_min(STATIONARY_GRAD_NORM),
                            torch.zeros_like(gnorm))
        step = grad * scale.view(-1, 1, 1, 1)
        if step_hook is not None:
            step_hook(it, step.flatten(1).norm(dim=1).detach().numpy())
        xa = xa.detach() - step
        delta = xa - x0
        dnorm = delta.flatten(1).norm(dim=1)
        factor = torch.clamp(config.epsilon / dnorm.clamp_min(STATIONARY_GRAD_NORM), max=1.0)
        xa = x0 + delta * factor.view(-1, 1, 1, 1)
        if config.clip_min is not None or config.clip_max is not None:
            xa = xa.clamp(config.clip_min, config.clip_max)
    return xa.detach()
