"""Measurement protocol: train on encrypted data, score across four settings.

Settings: Enc (encrypted test set), Orig (original test set), Orig+P
(original test set with the correspondence applied to each prediction), and
R+Orig (model trained on the random-target control, original test set).
Confusion matrices are the stored ground truth; every accuracy is derived
from them so the report cannot go inconsistent.
"""

import dataclasses
import json

import numpy as np

from . import classifier
from .correspondence import Correspondence
from .data import LabeledDataset
from .errors import ValidationError

ENC_SETTING_FOOTNOTE = (
    "Enc-column caveat: building an encrypted test set requires the true "
    "labels, so this accuracy is vacuous for an attacker and serves only as "
    "a benchmark."
)

SETTING_ORDER = ("enc", "orig", "orig_p", "r_orig")
SETTING_LABELS = {"enc": "Enc", "orig": "Orig", "orig_p": "Orig+P", "r_orig": "R+Orig"}


def confusion_matrix(handle, dataset: LabeledDataset) -> np.ndarray:
    """Counts indexed [true label, predicted label]."""
    preds = classifier.predict(handle, dataset.inputs)
    m = dataset.num_classes
    conf = np.zeros((m, m), dtype=np.int64)
    np.add.at(conf, (dataset.labels, preds), 1)
    return conf


def accuracy_from_confusion(conf: np.ndarray) -> float:
    return float(np.trace(conf) / conf.sum())


def post_mapped_accuracy(conf: np.ndarray, corr: Correspondence) -> float:
    """Accuracy after replacing each prediction q with P(q)."""
    table = np.asarray([row[0] for row in corr.targets])
    # prediction q counts as correct for true class y when P(q) == y
    hits = sum(conf[y, q] for q in range(len(table)) for y in [table[q]])
    return float(hits / conf.sum())


@dataclasses.dataclass
class EvaluationRow:
    architecture_id: str
    confusions: dict  # setting -> m x m count matrix (np.ndarray)

    def accuracies(self, corr: Correspondence) -> dict:
        accs = {}
        if "enc" in self.confusions:
            accs["enc"] = accuracy_from_confusion(self.confusions["enc"])
        if "orig" in self.confusions:
            accs["orig"] = accuracy_from_confusion(self.confusions["orig"])
            accs["orig_p"] = post_mapped_accuracy(self.confusions["orig"], corr)
        if "r_orig" in self.confusions:
            accs["r_orig"] = accuracy_from_confusion(self.confusions["r_orig"])
        return accs

    def prediction_distributions(self) -> np.ndarray:
        """Row-stochastic matrix: how original-test samples of each class are predicted."""
        conf = self.confusions["orig"].astype(np.float64)
        totals = conf.sum(axis=1, keepdims=True)
        if np.any(totals == 0):
            raise ValidationError("a class has no samples in the original test set")
        return conf / totals


@dataclasses.dataclass
class EvaluationReport:
    rows: list
    correspondence: Correspondence
    metadata: dict
    footnote: str = ENC_SETTING_FOOTNOTE

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "architecture_id": r.architecture_id,
                    "confusions": {k: v.tolist() for k, v in r.confusions.items()},
                }
                for r in self.rows
            ],
            "correspondence": self.correspondence.to_dict(),
            "metadata": self.metadata,
            "footnote": self.footnote,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        rows = [
            EvaluationRow(
                architecture_id=r["architecture_id"],
                confusions={k: np.asarray(v, dtype=np.int64)
                            for k, v in r["confusions"].items()},
            )
            for r in d["rows"]
        ]
        return cls(rows=rows,
                   correspondence=Correspondence.from_dict(
                       d["correspondence"], allow_self_target=True),
                   metadata=d["metadata"],
                   footnote=d["footnote"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        return cls.from_dict(json.loads(text))

    def render_table(self) -> str:
        lines = []
        width = max([len("model")] + [len(r.architecture_id) for r in self.rows]) + 2
        header = "model".ljust(width) + "".join(
            SETTING_LABELS[s].rjust(9) for s in SETTING_ORDER)
        lines.append(header)
        lines.append("-" * len(header))
        for r in self.rows:
            accs = r.accuracies(self.correspondence)
            cells = "".join(
                (f"{accs[s] * 100:8.2f}%" if s in accs else "        -")
                for s in SETTING_ORDER)
            lines.append(r.architecture_id.ljust(width) + cells)
        lines.append("")
        lines.append(self.footnote)
        return "\n".join(lines)


def prediction_distribution(handle, dataset: LabeledDataset, source_class: int) -> np.ndarray:
    """Fraction of source_class samples predicted as each class."""
    idx = dataset.class_indices(source_class)
    if len(idx) == 0:
        raise ValidationError(f"class {source_class} has no samples")
    preds = classifier.predict(handle, dataset.inputs[idx])
    counts = np.bincount(preds, minlength=dataset.num_classes)
    return counts.astype(np.float64) / len(idx)


def evaluation_matrix(enc_train: LabeledDataset, enc_test: LabeledDataset,
                      orig_test: LabeledDataset, rtrain,
                      architectures, correspondence: Correspondence,
                      train_config: classifier.TrainConfig) -> EvaluationReport:
    """Train per architecture on the encrypted set and fill the setting grid."""
    for ds, name in ((enc_test, "enc_test"), (orig_test, "orig_test")):
        if ds.num_classes != enc_train.num_classes or ds.sample_shape != enc_train.sample_shape:
            raise ValidationError(f"{name} does not match enc_train's class space or shape")
    rows = []
    for arch in architectures:
        handle = classifier.train(enc_train, arch, train_config)
        confusions = {
            "enc": confusion_matrix(handle, enc_test),
            "orig": confusion_matrix(handle, orig_test),
        }
        if rtrain is not None:
            rhandle = classifier.train(rtrain, arch, train_config)
            confusions["r_orig"] = confusion_matrix(rhandle, orig_test)
        rows.append(EvaluationRow(architecture_id=arch, confusions=confusions))
    metadata = {
        "train_config": train_config.to_dict(),
        "architectures": list(architectures),
        "n_enc_train": len(enc_train),
        "n_test": len(orig_test),
    }
    return EvaluationReport(rows=rows, correspondence=correspondence, metadata=metadata)


def cross_domain_probe(train_set: LabeledDataset, test_set: LabeledDataset,
                       architecture: str, train_config: classifier.TrainConfig) -> float:
    """Plain train-on-A, test-on-B accuracy; measures the domain gap."""
    handle = classifier.train(train_set, architecture, train_config)
    return classifier.accuracy(handle, test_set)
