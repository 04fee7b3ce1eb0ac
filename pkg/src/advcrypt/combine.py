"""Combiners that merge several perturbed variants of an image into one.

All primitives accept extra leading batch dimensions: shapes (..., H, W, C).
"""

import dataclasses
import math

import numpy as np

from .errors import ValidationError

COMBINER_ARITY = {
    "identity": 1,
    "horizontal_concat": 2,
    "mixup": 2,
    "mixup_and_concat": 4,
}


def _check_same_shape(*arrays):
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValidationError(f"input shapes differ: {sorted(shapes)}")


def _split_column(width: int, left_fraction: float) -> int:
    if not 0.0 < left_fraction < 1.0:
        raise ValidationError(f"left_fraction must be in (0, 1), got {left_fraction}")
    # round half away from zero; plain round() would bank 2.5 -> 2
    return int(math.floor(left_fraction * width + 0.5))


def horizontal_concat(x1: np.ndarray, x2: np.ndarray, left_fraction: float) -> np.ndarray:
    """Left columns from x1, remaining columns from x2."""
    x1 = np.asarray(x1)
    x2 = np.asarray(x2)
    _check_same_shape(x1, x2)
    k = _split_column(x1.shape[-2], left_fraction)
    return np.concatenate([x1[..., :k, :], x2[..., k:, :]], axis=-2)


def mixup(x1: np.ndarray, x2: np.ndarray, alpha: float) -> np.ndarray:
    """Convex combination alpha * x1 + (1 - alpha) * x2."""
    x1 = np.asarray(x1)
    x2 = np.asarray(x2)
    _check_same_shape(x1, x2)
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")
    return (alpha * x1 + (1.0 - alpha) * x2).astype(x1.dtype)


def mixup_and_concat(x1, x2, x3, x4, w12: float, w34: float,
                     left_fraction: float) -> np.ndarray:
    """Mix (x1, x2) and (x3, x4), then concatenate the two mixes horizontally."""
    return horizontal_concat(mixup(x1, x2, w12), mixup(x3, x4, w34), left_fraction)


@dataclasses.dataclass(frozen=True)
class CombinerSpec:
    """Which merge function to run and with what constants.

    ratio is the left-fraction for concat kinds; either one global float or
    a per-class mapping {class index: fraction}. weights are the two mixup
    coefficients (w12, w34) for mixup_and_concat; alpha is the single mixup
    coefficient.
    """

    kind: str
    ratio: "float | dict | None" = None
    alpha: "float | None" = None
    weights: "tuple | None" = None

    def __post_init__(self):
        if self.kind not in COMBINER_ARITY:
            raise ValidationError(
                f"unknown combiner kind {self.kind!r}; known: {sorted(COMBINER_ARITY)}")
        if self.kind in ("horizontal_concat", "mixup_and_concat"):
            if self.ratio is None:
                raise ValidationError(f"{self.kind} requires a ratio")
            for r in (self.ratio.values() if isinstance(self.ratio, dict) else [self.ratio]):
                if not 0.0 < float(r) < 1.0:
                    raise ValidationError(f"ratio must be in (0, 1), got {r}")
        if self.kind == "mixup":
            if self.alpha is None or not 0.0 <= self.alpha <= 1.0:
                raise ValidationError(f"mixup requires alpha in [0, 1], got {self.alpha}")
        if self.kind == "mixup_and_concat":
            if self.weights is None or len(self.weights) != 2:
                raise ValidationError("mixup_and_concat requires weights (w12, w34)")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
            for w in self.weights:
                if not 0.0 <= w <= 1.0:
                    raise ValidationError(f"mixup weight must be in [0, 1], got {w}")

    @property
    def arity(self) -> int:
        return COMBINER_ARITY[self.kind]

    def resolve_ratio(self, source_class: int) -> float:
        if isinstance(self.ratio, dict):
            if source_class not in self.ratio:
                raise ValidationError(f"no ratio configured for class {source_class}")
            return float(self.ratio[source_class])
        return float(self.ratio)

    def to_dict(self) -> dict:
        ratio = self.ratio
        if isinstance(ratio, dict):
            ratio = {str(k): float(v) for k, v in ratio.items()}
        return {"kind": self.kind, "ratio": ratio, "alpha": self.alpha,
                "weights": list(self.weights) if self.weights else None}

    @classmethod
    def from_dict(cls, d: dict) -> "CombinerSpec":
        ratio = d.get("ratio")
        if isinstance(ratio, dict):
            ratio = {int(k): float(v) for k, v in ratio.items()}
        weights = d.get("weights")
        return cls(kind=d["kind"], ratio=ratio, alpha=d.get("alpha"),
                   weights=tuple(weights) if weights else None)


def apply(spec: CombinerSpec, variants, source_class: int) -> np.ndarray:
    """Merge the per-target variants of one source image (or batch)."""
    variants = [np.asarray(v) for v in variants]
    if len(variants) != spec.arity:
        raise ValidationError(
            f"{spec.kind} takes {spec.arity} variants, got {len(variants)}")
    if spec.kind == "identity":
        return variants[0]
    if spec.kind == "horizontal_concat":
        return horizontal_concat(*variants, spec.resolve_ratio(source_class))
    if spec.kind == "mixup":
        return mixup(*variants, spec.alpha)
    return mixup_and_concat(*variants, spec.weights[0], spec.weights[1],
                            spec.resolve_ratio(source_class))
