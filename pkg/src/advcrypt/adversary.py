"""Attacker-side recovery: infer the secret correspondence from encrypted data.

The attacker holds the encrypted set D and some clean labeled data D'. They
train a surrogate M1 on D and an encryptor M2 on D', then score hypotheses
by re-encrypting D' under each candidate target assignment and measuring
M1's accuracy: the true assignment reproduces M1's training distribution
and scores highest. Self-targets are allowed here (the hypothesis space is
deliberately laxer than the defender's validation rules).
"""

import dataclasses

import numpy as np

from . import classifier
from .combine import horizontal_concat, mixup_and_concat
from .correspondence import Correspondence
from .data import LabeledDataset
from .encrypt import EncryptionRecipe
from .errors import ValidationError
from .pgd import AttackConfig, pgd_targeted_batch


@dataclasses.dataclass(frozen=True)
class Hypothesis:
    probed_class: int
    targets: tuple
    combiner_kind: str
    ratio: "float | None"
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score must be in [0, 1], got {self.score}")


@dataclasses.dataclass
class BasicRecovery:
    recovered: tuple  # argmax target per class
    scores: np.ndarray  # (m, m): probed class x candidate target
    attempts_per_class: int
    metadata: dict

    def render_table(self, probed_class: int = 0) -> str:
        lines = [f"hypothesis scores for class {probed_class} "
                 f"({self.attempts_per_class} attempts)"]
        for t, s in enumerate(self.scores[probed_class]):
            marker = " (orig test set)" if t == probed_class else ""
            star = "  <-- best" if t == self.recovered[probed_class] else ""
            lines.append(f"  {probed_class} -> {t}{marker}: {s * 100:.2f}%{star}")
        return "\n".join(lines)


@dataclasses.dataclass
class PairRecovery:
    probed_class: int
    ranking: list  # Hypothesis, best first
    metadata: dict

    def render_table(self, top: int = 10) -> str:
        lines = [f"top pair hypotheses for class {self.probed_class} "
                 f"({len(self.ranking)} enumerated)"]
        for h in self.ranking[:top]:
            lines.append(f"  {self.probed_class} -> {h.targets}: {h.score * 100:.2f}%")
        return "\n".join(lines)


def _train_pair(enc_data, clean_data, architectures, train_config, m1, m2):
    m1_arch, m2_arch = architectures
    if m1 is None:
        m1 = classifier.train(enc_data, m1_arch, train_config)
    if m2 is None:
        m2 = classifier.train(clean_data, m2_arch, train_config)
    return m1, m2


def _scoring_context(m1, clean_data):
    """Predictions of M1 on unmodified D', reused across hypotheses."""
    preds = classifier.predict(m1, clean_data.inputs)
    correct = preds == clean_data.labels
    return preds, correct


def recover_basic_correspondence(enc_data: LabeledDataset, clean_data: LabeledDataset,
                                 architectures, train_config, attack_config: AttackConfig,
                                 m1=None, m2=None) -> BasicRecovery:
    """Enumerate the single target of each class; exactly m scoring passes per class.

    For each probed class the other classes stay unencrypted, so the
    candidate's score is the overall accuracy of M1 on D' with only that
    class's samples re-encrypted. The self-target candidate doubles as the
    plain-test-set row.
    """
    if enc_data.num_classes != clean_data.num_classes:
        raise ValidationError("encrypted and clean data must share the class space")
    m = clean_data.num_classes
    m1, m2 = _train_pair(enc_data, clean_data, architectures, train_config, m1, m2)
    _, base_correct = _scoring_context(m1, clean_data)
    n = len(clean_data)

    scores = np.zeros((m, m), dtype=np.float64)
    for c in range(m):
        idx = clean_data.class_indices(c)
        rest_correct = int(base_correct.sum()) - int(base_correct[idx].sum())
        for t in range(m):
            if t == c:
                class_correct = int(base_correct[idx].sum())
            else:
                enc = pgd_targeted_batch(m2, clean_data.inputs[idx],
                                         np.full(len(idx), t), attack_config)
                class_correct = int(np.sum(
                    classifier.predict(m1, enc) == clean_data.labels[idx]))
            scores[c, t] = (rest_correct + class_correct) / n
    recovered = tuple(int(np.argmax(scores[c])) for c in range(m))
    return BasicRecovery(
        recovered=recovered,
        scores=scores,
        attempts_per_class=m,
        metadata={"m1_digest": m1.parameter_digest, "m2_digest": m2.parameter_digest},
    )


def recover_pair_targets(enc_data: LabeledDataset, clean_data: LabeledDataset,
                         probed_class: int, assumed_ratio: float, architectures,
                         train_config, attack_config: AttackConfig,
                         m1=None, m2=None) -> PairRecovery:
    """Enumerate all m^2 ordered target pairs for one class under a concat guess.

    The enumeration includes repeats and self-targets, making the budget
    exactly m^2 hypotheses per probed class and auditable from the report.
    """
    if enc_data.num_classes != clean_data.num_classes:
        raise ValidationError("encrypted and clean data must share the class space")
    m = clean_data.num_classes
    m1, m2 = _train_pair(enc_data, clean_data, architectures, train_config, m1, m2)
    _, base_correct = _scoring_context(m1, clean_data)
    n = len(clean_data)
    idx = clean_data.class_indices(probed_class)
    rest_correct = int(base_correct.sum()) - int(base_correct[idx].sum())

    # one perturbation run per candidate target, combined pairwise afterwards
    variants = [
        pgd_targeted_batch(m2, clean_data.inputs[idx], np.full(len(idx), t), attack_config)
        for t in range(m)
    ]
    hypotheses = []
    for a in range(m):
        for b in range(m):
            composed = horizontal_concat(variants[a], variants[b], assumed_ratio)
            class_correct = int(np.sum(
                classifier.predict(m1, composed) == clean_data.labels[idx]))
            hypotheses.append(Hypothesis(
                probed_class=probed_class, targets=(a, b),
                combiner_kind="horizontal_concat", ratio=assumed_ratio,
                score=(rest_correct + class_correct) / n))
    ranking = sorted(hypotheses, key=lambda h: (-h.score, h.targets))
    return PairRecovery(
        probed_class=probed_class,
        ranking=ranking,
        metadata={"m1_digest": m1.parameter_digest, "m2_digest": m2.parameter_digest,
                  "assumed_ratio": assumed_ratio, "enumerated": m * m},
    )


def ratio_sweep(handle, enc_test_builder, ratios) -> list:
    """Accuracy of the model against test sets rebuilt at each composition ratio."""
    results = []
    for r in ratios:
        dataset = enc_test_builder(float(r))
        results.append((float(r), classifier.accuracy(handle, dataset)))
    return results


def target_count_probe(handle, orig_test: LabeledDataset, encryptor,
                       recipe: EncryptionRecipe) -> dict:
    """Score competing reconstructions against a mixup-and-concat-trained model.

    handle was trained on the mixup-and-concat encrypted training set; the
    probe rebuilds the test set under weaker hypotheses (no encryption,
    first target only, first two targets concatenated) and under the true
    method, and reports each accuracy.
    """
    if recipe.combiner.kind != "mixup_and_concat":
        raise ValidationError("target-count probe expects a mixup_and_concat recipe")
    corr = recipe.correspondence
    targets = np.asarray(corr.targets, dtype=np.int64)  # (m, 4)
    labels = orig_test.labels
    w12, w34 = recipe.combiner.weights

    def perturbed(col):
        return pgd_targeted_batch(encryptor, orig_test.inputs,
                                  targets[labels, col], recipe.attack)

    v = [perturbed(i) for i in range(4)]
    per_class_ratio = [recipe.combiner.resolve_ratio(int(y)) for y in labels]
    if len(set(per_class_ratio)) == 1:
        ratio = per_class_ratio[0]
        concat12 = horizontal_concat(v[0], v[1], ratio)
        true_method = mixup_and_concat(v[0], v[1], v[2], v[3], w12, w34, ratio)
    else:
        concat12 = np.stack([
            horizontal_concat(v[0][i], v[1][i], per_class_ratio[i])
            for i in range(len(labels))])
        true_method = np.stack([
            mixup_and_concat(v[0][i], v[1][i], v[2][i], v[3][i], w12, w34,
                             per_class_ratio[i])
            for i in range(len(labels))])

    candidates = {
        "orig": orig_test.inputs,
        "target1": v[0],
        "target1_target2_concat": concat12,
        "true_method": true_method,
    }
    return {
        name: float(np.mean(classifier.predict(handle, inputs) == labels))
        for name, inputs in candidates.items()
    }
