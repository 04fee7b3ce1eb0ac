"""Batch command-line surface.

Every command consumes one declarative JSON config and writes its artifacts
into a run directory named by the config digest, so re-running an identical
config reproduces identical artifacts. Exit codes: 0 success, 2 config or
validation error, 3 compute error.
"""

import argparse
import json
import shutil
import sys
import traceback
from pathlib import Path

import numpy as np

from . import adversary, classifier, evaluate
from .correspondence import Correspondence
from .data import (DatasetManifest, DatasetManifest as _Manifest, LabeledDataset,
                   load_dataset, load_encrypted, save_encrypted)
from .encrypt import (EncryptionRecipe, encrypt_basic, encrypt_combined,
                      encrypt_random_targets)
from .errors import AdvcryptError, ValidationError
from .pgd import AttackConfig
from .utils import canonical_json, digest_of, set_deterministic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTE = 3


def _load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


def _require(config: dict, *keys):
    for key in keys:
        if key not in config:
            raise ValidationError(f"config is missing required key {key!r}")


def _resolve_source(config, key, base: Path):
    _require(config, key)
    spec = dict(config[key])
    if "path" in spec:
        spec["path"] = str((base / spec["path"]).resolve())
    return spec


class RunDir:
    """Stages artifacts in <out>/<digest>.tmp, renamed into place on success."""

    def __init__(self, out_root, config: dict):
        self.digest = digest_of(config)[:12]
        self.final = Path(out_root) / f"run-{self.digest}"
        self.staging = self.final.with_suffix(".tmp")
        if self.staging.exists():
            shutil.rmtree(self.staging)
        self.staging.mkdir(parents=True)
        (self.staging / "config.json").write_text(canonical_json(config))

    def path(self, name) -> Path:
        return self.staging / name

    def commit(self) -> Path:
        if self.final.exists():
            shutil.rmtree(self.final)
        self.staging.rename(self.final)
        return self.final

    def abort(self) -> None:
        if self.staging.exists():
            shutil.rmtree(self.staging)


def _train_config(block: dict) -> classifier.TrainConfig:
    return classifier.TrainConfig.from_dict(block)


def _load_correspondence(config, base: Path, allow_self_target=False) -> Correspondence:
    block = config["correspondence"]
    if isinstance(block, str):
        return Correspondence.from_json((base / block).read_text(),
                                        allow_self_target=allow_self_target)
    if "path" in block:
        return Correspondence.from_json((base / block["path"]).read_text(),
                                        allow_self_target=allow_self_target)
    return Correspondence.from_dict(block, allow_self_target=allow_self_target)


def cmd_train_base(config: dict, run: RunDir, base: Path) -> None:
    _require(config, "dataset", "architecture", "train")
    dataset = load_dataset(_resolve_source(config, "dataset", base))
    handle = classifier.train(dataset, config["architecture"], _train_config(config["train"]))
    classifier.save_checkpoint(handle, run.path("checkpoint"))
    summary = {
        "parameter_digest": handle.parameter_digest,
        "architecture": handle.architecture_id,
        "train_accuracy": classifier.accuracy(handle, dataset),
    }
    run.path("summary.json").write_text(canonical_json(summary))
    print(f"trained {handle.architecture_id}: digest {handle.parameter_digest[:12]}...")


def cmd_encrypt(config: dict, run: RunDir, base: Path) -> None:
    _require(config, "dataset", "checkpoint", "mode")
    dataset = load_dataset(_resolve_source(config, "dataset", base))
    handle = classifier.load_checkpoint(base / config["checkpoint"])
    mode = config["mode"]
    source_name = config.get("source_name", "dataset")
    if mode == "random":
        _require(config, "attack", "seed")
        attack = AttackConfig.from_dict(config["attack"])
        out = encrypt_random_targets(dataset, handle, attack, int(config["seed"]))
        manifest = DatasetManifest(
            dataset_name=f"{source_name}-random-targets",
            shape=dataset.sample_shape, num_classes=dataset.num_classes,
            recipe_digest="", seed=int(config["seed"]), created_from=source_name)
    else:
        _require(config, "recipe")
        recipe_block = dict(config["recipe"])
        recipe_block.setdefault("base_classifier", handle.parameter_digest)
        recipe = EncryptionRecipe.from_dict(
            recipe_block, allow_self_target=bool(config.get("allow_self_target", False)))
        run.path("recipe.json").write_text(recipe.to_json())
        if mode == "basic":
            out, manifest = encrypt_basic(dataset, handle, recipe, source_name)
        elif mode == "combined":
            out, manifest = encrypt_combined(dataset, handle, recipe, source_name)
        else:
            raise ValidationError(f"mode must be basic, combined, or random; got {mode!r}")
    save_encrypted(out, manifest, run.path("encrypted"))
    print(f"encrypted {len(out)} samples (mode={mode}); dataset digest {out.digest()[:12]}...")


def cmd_evaluate(config: dict, run: RunDir, base: Path) -> None:
    _require(config, "enc_train", "enc_test", "orig_test", "architectures",
             "correspondence", "train")
    enc_train = load_dataset(_resolve_source(config, "enc_train", base))
    enc_test = load_dataset(_resolve_source(config, "enc_test", base))
    orig_test = load_dataset(_resolve_source(config, "orig_test", base))
    rtrain = None
    if "rtrain" in config:
        rtrain = load_dataset(_resolve_source(config, "rtrain", base))
    corr = _load_correspondence(config, base, allow_self_target=True)
    report = evaluate.evaluation_matrix(
        enc_train, enc_test, orig_test, rtrain,
        config["architectures"], corr, _train_config(config["train"]))
    run.path("report.json").write_text(report.to_json())
    table = report.render_table()
    run.path("report.txt").write_text(table + "\n")
    print(table)


def cmd_attack(config: dict, run: RunDir, base: Path) -> None:
    _require(config, "mode", "enc_data", "clean_data", "architectures", "train", "attack")
    enc_data = load_dataset(_resolve_source(config, "enc_data", base))
    clean_data = load_dataset(_resolve_source(config, "clean_data", base))
    architectures = tuple(config["architectures"])
    train_config = _train_config(config["train"])
    attack = AttackConfig.from_dict(config["attack"])
    mode = config["mode"]
    if mode == "recover-basic":
        result = adversary.recover_basic_correspondence(
            enc_data, clean_data, architectures, train_config, attack)
        out = {
            "recovered": list(result.recovered),
            "scores": result.scores.tolist(),
            "attempts_per_class": result.attempts_per_class,
            "metadata": result.metadata,
        }
        table = "\n".join(result.render_table(c) for c in range(clean_data.num_classes))
    elif mode == "recover-pairs":
        _require(config, "probed_class", "assumed_ratio")
        result = adversary.recover_pair_targets(
            enc_data, clean_data, int(config["probed_class"]),
            float(config["assumed_ratio"]), architectures, train_config, attack)
        out = {
            "probed_class": result.probed_class,
            "ranking": [{"targets": list(h.targets), "score": h.score}
                        for h in result.ranking],
            "metadata": result.metadata,
        }
        table = result.render_table()
    else:
        raise ValidationError(f"attack mode must be recover-basic or recover-pairs, got {mode!r}")
    run.path("attack_report.json").write_text(canonical_json(out))
    run.path("attack_report.txt").write_text(table + "\n")
    print(table)


def cmd_report(config: dict, run: RunDir, base: Path) -> None:
    _require(config, "report")
    path = base / config["report"]
    if not path.is_file():
        raise ValidationError(f"report file not found: {path}")
    report = evaluate.EvaluationReport.from_json(path.read_text())
    table = report.render_table()
    run.path("report.txt").write_text(table + "\n")
    print(table)


_COMMANDS = {
    "train-base": cmd_train_base,
    "encrypt": cmd_encrypt,
    "evaluate": cmd_evaluate,
    "attack": cmd_attack,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advcrypt",
        description="Encrypt labeled image datasets against unauthorized model training.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--out", default="runs", help="root directory for run artifacts")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--deterministic", action="store_true",
                       help="force deterministic kernels")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        if args.deterministic:
            set_deterministic()
        config["_command"] = args.command
        run = RunDir(args.out, config)
    except AdvcryptError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    base = Path(args.config).resolve().parent
    try:
        _COMMANDS[args.command](config, run, base)
    except ValidationError as exc:
        run.abort()
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AdvcryptError as exc:
        run.abort()
        print(f"compute error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except Exception:
        run.abort()
        traceback.print_exc()
        return EXIT_COMPUTE
    final = run.commit()
    print(f"artifacts: {final}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
