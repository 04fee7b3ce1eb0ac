"""Dataset-level encryption: perturb every sample toward its class targets.

Basic mode perturbs each input toward the single target of its class.
Combined mode builds one perturbed variant per target and merges them with
the recipe's combiner. The random-target mode is the control where targets
are drawn per sample instead of per class; it deliberately fails to encrypt.
"""

import dataclasses
import json
import math

import numpy as np

from .classifier import ClassifierHandle
from .combine import CombinerSpec, apply as apply_combiner
from .correspondence import Correspondence
from .data import DatasetManifest, LabeledDataset
from .errors import AttackError, ValidationError
from .pgd import AttackConfig, pgd_targeted_batch
from .utils import digest_of

L2_SLACK = 1e-5


@dataclasses.dataclass(frozen=True)
class EncryptionRecipe:
    """Everything needed to reproduce an encryption run bit for bit."""

    correspondence: Correspondence
    attack: AttackConfig
    combiner: CombinerSpec
    base_classifier: str  # parameter digest of the classifier used to perturb
    seed: int = 0

    def __post_init__(self):
        arities = set(self.correspondence.arities)
        if arities != {self.combiner.arity}:
            raise ValidationError(
                f"combiner {self.combiner.kind!r} needs {self.combiner.arity} targets per "
                f"class but the correspondence has counts {sorted(arities)}")

    def to_dict(self) -> dict:
        return {
            "correspondence": self.correspondence.to_dict(),
            "attack": self.attack.to_dict(),
            "combiner": self.combiner.to_dict(),
            "base_classifier": self.base_classifier,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict, allow_self_target: bool = False) -> "EncryptionRecipe":
        return cls(
            correspondence=Correspondence.from_dict(
                d["correspondence"], allow_self_target=allow_self_target),
            attack=AttackConfig.from_dict(d["attack"]),
            combiner=CombinerSpec.from_dict(d["combiner"]),
            base_classifier=d["base_classifier"],
            seed=int(d.get("seed", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str, allow_self_target: bool = False) -> "EncryptionRecipe":
        return cls.from_dict(json.loads(text), allow_self_target=allow_self_target)

    def digest(self) -> str:
        return digest_of(self.to_dict())


def _check_handle(dataset: LabeledDataset, handle: ClassifierHandle, recipe: EncryptionRecipe):
    if recipe.base_classifier and handle.parameter_digest != recipe.base_classifier:
        raise ValidationError(
            f"classifier digest {handle.parameter_digest[:12]}... does not match the "
            f"recipe's pinned base classifier {recipe.base_classifier[:12]}...")
    if handle.num_classes != dataset.num_classes:
        raise ValidationError(
            f"classifier has {handle.num_classes} classes, dataset has {dataset.num_classes}")
    if recipe.correspondence.num_classes != dataset.num_classes:
        raise ValidationError(
            f"correspondence covers {recipe.correspondence.num_classes} classes, "
            f"dataset has {dataset.num_classes}")


def _manifest(dataset, recipe_digest, seed, source_name):
    return DatasetManifest(
        dataset_name=f"{source_name}-encrypted",
        shape=dataset.sample_shape,
        num_classes=dataset.num_classes,
        recipe_digest=recipe_digest,
        seed=seed,
        created_from=source_name,
    )


def _verify_bound(original, encrypted, bound, what):
    norms = np.linalg.norm(
        (encrypted.astype(np.float64) - original.astype(np.float64)).reshape(len(original), -1),
        axis=1)
    worst = float(norms.max()) if len(norms) else 0.0
    if worst > bound + L2_SLACK:
        raise AttackError(
            f"{what}: perturbation L2 {worst:.6f} exceeds bound {bound:.6f}")
    if len(encrypted) and (encrypted.min() < 0.0 or encrypted.max() > 1.0):
        raise AttackError(f"{what}: encrypted values left [0, 1]")


def distance_bound(recipe: EncryptionRecipe) -> float:
    """Worst-case L2 distance of an encrypted sample from its original.

    Mixup stays inside the ball by convexity; concatenation of two ball
    variants can reach sqrt(2) * epsilon because the halves are disjoint.
    """
    eps = recipe.attack.epsilon
    if recipe.combiner.kind in ("horizontal_concat", "mixup_and_concat"):
        return math.sqrt(2.0) * eps
    return eps


def encrypt_basic(dataset: LabeledDataset, handle: ClassifierHandle,
                  recipe: EncryptionRecipe, source_name: str = "dataset"):
    """Perturb every input toward its class's single target."""
    if recipe.correspondence.uniform_arity != 1:
        raise ValidationError("basic encryption needs a single-target correspondence")
    _check_handle(dataset, handle, recipe)
    table = np.asarray([row[0] for row in recipe.correspondence.targets], dtype=np.int64)
    targets = table[dataset.labels]
    encrypted = pgd_targeted_batch(handle, dataset.inputs, targets, recipe.attack)
    _verify_bound(dataset.inputs, encrypted, recipe.attack.epsilon, "basic encryption")
    out = dataset.with_inputs(encrypted)
    return out, _manifest(dataset, recipe.digest(), recipe.seed, source_name)


def encrypt_combined(dataset: LabeledDataset, handle: ClassifierHandle,
                     recipe: EncryptionRecipe, source_name: str = "dataset"):
    """Perturb toward each of the class's targets and merge the variants."""
    _check_handle(dataset, handle, recipe)
    arity = recipe.combiner.arity
    target_matrix = np.asarray(recipe.correspondence.targets, dtype=np.int64)  # (m, arity)
    variants = [
        pgd_targeted_batch(handle, dataset.inputs, target_matrix[dataset.labels, i],
                           recipe.attack)
        for i in range(arity)
    ]
    combined = np.empty_like(dataset.inputs)
    for c in range(dataset.num_classes):
        idx = dataset.class_indices(c)
        if len(idx) == 0:
            continue
        combined[idx] = apply_combiner(
            recipe.combiner, [v[idx] for v in variants], source_class=c)
    _verify_bound(dataset.inputs, combined, distance_bound(recipe), "combined encryption")
    out = dataset.with_inputs(combined)
    return out, _manifest(dataset, recipe.digest(), recipe.seed, source_name)


def encrypt_random_targets(dataset: LabeledDataset, handle: ClassifierHandle,
                           attack: AttackConfig, seed: int) -> LabeledDataset:
    """Control run: per-sample random non-self targets instead of a fixed map.

    The target stream is keyed by (seed, sample index) so the output does not
    depend on iteration order or batching.
    """
    if dataset.num_classes < 2:
        raise ValidationError("need at least 2 classes to draw non-self targets")
    if handle.num_classes != dataset.num_classes:
        raise ValidationError(
            f"classifier has {handle.num_classes} classes, dataset has {dataset.num_classes}")
    m = dataset.num_classes
    targets = np.empty(len(dataset), dtype=np.int64)
    for i, y in enumerate(dataset.labels):
        draw = np.random.default_rng([seed, i]).integers(0, m - 1)
        targets[i] = draw + 1 if draw >= y else draw
    encrypted = pgd_targeted_batch(handle, dataset.inputs, targets, attack)
    _verify_bound(dataset.inputs, encrypted, attack.epsilon, "random-target encryption")
    return dataset.with_inputs(encrypted)
