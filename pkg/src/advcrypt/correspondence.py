"""Class-correspondence tables: which target classes each source class maps to.

A correspondence assigns every class y an ordered list of target classes.
The single-target case is a fixed-point-free permutation; multi-target
tables drive the combined encryption modes. Mapping a class to itself would
inject correct features and defeat the scheme, so self-targets are rejected
unless explicitly allowed for experimentation.
"""

import dataclasses
import json

import numpy as np

from .errors import ValidationError
from .utils import digest_of


@dataclasses.dataclass(frozen=True)
class Correspondence:
    num_classes: int
    targets: tuple  # per class: ordered tuple of target class indices

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValidationError(f"need at least 2 classes, got {self.num_classes}")
        if len(self.targets) != self.num_classes:
            raise ValidationError(
                f"expected {self.num_classes} target rows, got {len(self.targets)}")
        norm = tuple(tuple(int(t) for t in row) for row in self.targets)
        object.__setattr__(self, "targets", norm)
        for y, row in enumerate(norm):
            if len(row) < 1:
                raise ValidationError(f"class {y}: target list is empty")
            if len(set(row)) != len(row):
                raise ValidationError(f"class {y}: duplicate targets in {row}")
            for t in row:
                if not 0 <= t < self.num_classes:
                    raise ValidationError(
                        f"class {y}: target {t} out of range [0, {self.num_classes})")

    def arity(self, y: int) -> int:
        return len(self.targets[y])

    @property
    def arities(self) -> tuple:
        return tuple(len(row) for row in self.targets)

    @property
    def uniform_arity(self):
        """The common targets-per-class count, or None if classes differ."""
        counts = set(self.arities)
        return counts.pop() if len(counts) == 1 else None

    def is_permutation(self) -> bool:
        if self.uniform_arity != 1:
            return False
        flat = sorted(row[0] for row in self.targets)
        return flat == list(range(self.num_classes))

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "targets": {str(y): list(row) for y, row in enumerate(self.targets)},
        }

    @classmethod
    def from_dict(cls, d: dict, allow_self_target: bool = False) -> "Correspondence":
        m = int(d["num_classes"])
        rows = [d["targets"][str(y)] for y in range(m)]
        return table_correspondence(rows, num_classes=m, allow_self_target=allow_self_target)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str, allow_self_target: bool = False) -> "Correspondence":
        return cls.from_dict(json.loads(text), allow_self_target=allow_self_target)

    def digest(self) -> str:
        return digest_of(self.to_dict())


def _check_no_self_targets(corr: Correspondence) -> Correspondence:
    for y, row in enumerate(corr.targets):
        if y in row:
            raise ValidationError(
                f"class {y} maps to itself; self-targets weaken the encryption "
                "(pass allow_self_target=True to override)")
    return corr


def permutation_correspondence(mapping, allow_self_target: bool = False) -> Correspondence:
    """Build a single-target correspondence from a permutation of [0, m)."""
    mapping = [int(t) for t in mapping]
    m = len(mapping)
    if sorted(mapping) != list(range(m)):
        raise ValidationError(f"{mapping} is not a permutation of [0, {m})")
    corr = Correspondence(m, tuple((t,) for t in mapping))
    return corr if allow_self_target else _check_no_self_targets(corr)


def table_correspondence(rows, num_classes=None, allow_self_target: bool = False) -> Correspondence:
    """Build a correspondence from explicit per-class target lists.

    Rows may have different lengths (classes may use different target counts).
    """
    rows = [list(r) for r in rows]
    m = num_classes if num_classes is not None else len(rows)
    corr = Correspondence(m, tuple(tuple(r) for r in rows))
    return corr if allow_self_target else _check_no_self_targets(corr)


def random_correspondence(m: int, n_targets: int, seed: int) -> Correspondence:
    """Seeded random correspondence with n_targets targets per class.

    For n_targets == 1 the result is a derangement permutation; for larger
    counts each class independently draws distinct non-self targets.
    """
    if m < 2:
        raise ValidationError(f"need at least 2 classes, got {m}")
    if not 1 <= n_targets <= m - 1:
        raise ValidationError(f"n_targets must be in [1, {m - 1}], got {n_targets}")
    rng = np.random.default_rng(seed)
    if n_targets == 1:
        while True:
            perm = rng.permutation(m)
            if not np.any(perm == np.arange(m)):
                return permutation_correspondence(perm.tolist())
    rows = []
    for y in range(m):
        pool = [t for t in range(m) if t != y]
        rows.append(rng.choice(pool, size=n_targets, replace=False).tolist())
    return table_correspondence(rows, num_classes=m)


def apply_post_map(correspondence: Correspondence, label: int):
    """P(label) for a single-target correspondence.

    Accepts a scalar label or an array of labels.
    """
    if correspondence.uniform_arity != 1:
        raise ValidationError("post-map is only defined for single-target correspondences")
    table = np.asarray([row[0] for row in correspondence.targets], dtype=np.int64)
    label = np.asarray(label)
    if np.any(label < 0) or np.any(label >= correspondence.num_classes):
        raise ValidationError(f"label out of range [0, {correspondence.num_classes})")
    mapped = table[label]
    return int(mapped) if mapped.ndim == 0 else mapped
