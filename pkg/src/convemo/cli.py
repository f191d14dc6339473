"""Command-line surface: synth / train / eval / gradcheck / ablate.

Exit codes: 0 success, 1 runtime failure (divergence, failed gradient check),
2 usage or configuration error. Flags override --config file values, which
override defaults; the effective configuration is echoed into the output
directory for provenance.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import model as M
from .autodiff import DimensionError, NonFiniteError, UsageError
from .checkpoint import CheckpointError, load_params, save_params
from .data import (
    DatasetManifest,
    Dataset,
    ParseError,
    SynthConfig,
    ValidationError,
    load_dataset,
    write_synth_dataset,
)
from .training import (
    TrainConfig,
    TrainingDiverged,
    ablation_table,
    evaluate,
    run_gradcheck,
    train,
)

_MODES = {"uni": False, "unidirectional": False, "bi": True, "bidirectional": True}

_DEFAULTS = {
    "train": {"manifest": None, "out": None, "seed": 0, "hidden": 150, "mode": "uni",
              "epochs": 50, "lr": 1e-4, "no_speaker_cs": False, "no_listener_cs": False,
              "clip": None, "dropout": 0.0},
    "eval": {"manifest": None, "checkpoint": None, "out": None, "split": "test",
             "no_speaker_cs": False, "no_listener_cs": False},
    "gradcheck": {"seed": 0, "tolerance": 1e-4, "hidden": 8},
    "ablate": {"manifest": None, "out": None, "seed": 0, "hidden": 32, "mode": "uni",
               "epochs": 10, "lr": 3e-3, "clip": None, "dropout": 0.0},
    "synth": {"out": None, "seed": 0, "dialogues": [300, 50, 50], "classes": 4,
              "p_shift": 0.3, "noise": 0.1, "speakers": [2, 3], "length": [4, 10],
              "d_x": 24, "d_cs": 16, "markov_stay": 0.4},
}


def _effective(args: argparse.Namespace, command: str) -> dict:
    cfg = dict(_DEFAULTS[command])
    ns = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    config_path = getattr(args, "config", None)
    if config_path is not None:
        try:
            file_cfg = json.loads(Path(config_path).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {config_path}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {config_path}: invalid JSON ({exc})")
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise UsageError(f"config file {config_path}: unknown keys {sorted(unknown)}")
        cfg.update(file_cfg)
    cfg.update(ns)
    return cfg


def _require(cfg: dict, *keys: str) -> None:
    for key in keys:
        if cfg.get(key) is None:
            raise UsageError(f"--{key.replace('_', '-')} is required")


def _bidirectional(cfg: dict) -> bool:
    mode = str(cfg["mode"]).lower()
    if mode not in _MODES:
        raise UsageError(f"--mode must be one of {sorted(_MODES)}")
    return _MODES[mode]


def _echo_config(cfg: dict, out_dir: Path, command: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, **cfg}
    (out_dir / "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load(cfg: dict) -> tuple[DatasetManifest, Dataset]:
    manifest_path = Path(cfg["manifest"])
    if not manifest_path.exists():
        raise UsageError(f"manifest not found: {manifest_path}")
    dataset = load_dataset(manifest_path)
    return dataset.manifest, dataset


def _dims(dataset: Dataset, hidden: int, num_classes: int, bidirectional: bool) -> M.ModelDims:
    for convs in dataset.splits.values():
        for conv in convs:
            rec = conv.records[0]
            return M.ModelDims(d_x=rec.features.d_x, d_cs=rec.features.d_cs, hidden=hidden,
                               num_classes=num_classes, bidirectional=bidirectional)
    raise UsageError("dataset has no records to infer feature dimensions from")


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _effective(args, "train")
    _require(cfg, "manifest", "out")
    manifest, dataset = _load(cfg)
    missing = [s for s in ("train", "val", "test") if s not in dataset.splits]
    if missing:
        raise UsageError(f"manifest lacks required splits: {missing}")
    out_dir = Path(cfg["out"])
    _echo_config(cfg, out_dir, "train")

    dims = _dims(dataset, int(cfg["hidden"]), manifest.num_classes, _bidirectional(cfg))
    params = M.init_params(dims, seed=int(cfg["seed"]))
    config = TrainConfig(
        epochs=int(cfg["epochs"]), lr=float(cfg["lr"]), seed=int(cfg["seed"]),
        ablation=M.Ablation(no_speaker_cs=bool(cfg["no_speaker_cs"]),
                            no_listener_cs=bool(cfg["no_listener_cs"])),
        clip_norm=None if cfg["clip"] is None else float(cfg["clip"]),
        dropout=float(cfg["dropout"]),
    )
    result = train(params, dataset.train, dataset.val, manifest, config)

    save_params(result.best_params, out_dir / "checkpoint.bin")
    (out_dir / "history.json").write_text(json.dumps(result.history, indent=2) + "\n")
    report = evaluate(result.best_params, dataset.test, manifest, config.ablation)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(f"best epoch {result.best_epoch} "
          f"val {manifest.headline_metric} {result.best_metric:.4f} "
          f"test {manifest.headline_metric} {report.metric(manifest.headline_metric):.4f}")
    print(f"wrote {out_dir / 'checkpoint.bin'}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _effective(args, "eval")
    _require(cfg, "manifest", "checkpoint")
    manifest, dataset = _load(cfg)
    params = load_params(cfg["checkpoint"])
    split = cfg["split"]
    if split not in dataset.splits:
        raise UsageError(f"unknown split {split!r}; manifest has {sorted(dataset.splits)}")
    if params.dims.num_classes != manifest.num_classes:
        raise UsageError(
            f"checkpoint has {params.dims.num_classes} classes, manifest {manifest.num_classes}")
    ablation = M.Ablation(no_speaker_cs=bool(cfg["no_speaker_cs"]),
                          no_listener_cs=bool(cfg["no_listener_cs"]))
    report = evaluate(params, dataset.splits[split], manifest, ablation)
    text = json.dumps(report.to_dict(), indent=2)
    print(text)
    if cfg["out"] is not None:
        out_dir = Path(cfg["out"])
        _echo_config(cfg, out_dir, "eval")
        (out_dir / "report.json").write_text(text + "\n")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    cfg = _effective(args, "gradcheck")
    outcome = run_gradcheck(seed=int(cfg["seed"]), tolerance=float(cfg["tolerance"]),
                            hidden=int(cfg["hidden"]))
    for line in outcome.lines:
        print(line)
    print(f"max relative error {outcome.max_error:.3e} "
          f"(tolerance {float(cfg['tolerance']):.1e}, {outcome.seconds:.1f}s)")
    if not outcome.passed:
        print("gradient check FAILED", file=sys.stderr)
        return 1
    print("gradient check passed")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _effective(args, "ablate")
    _require(cfg, "manifest", "out")
    manifest, dataset = _load(cfg)
    out_dir = Path(cfg["out"])
    _echo_config(cfg, out_dir, "ablate")

    dims = _dims(dataset, int(cfg["hidden"]), manifest.num_classes, _bidirectional(cfg))
    config = TrainConfig(epochs=int(cfg["epochs"]), lr=float(cfg["lr"]),
                         seed=int(cfg["seed"]),
                         clip_norm=None if cfg["clip"] is None else float(cfg["clip"]),
                         dropout=float(cfg["dropout"]))
    rows = ablation_table(dataset, manifest, dims, config)

    with_accuracy = manifest.headline_metric != "accuracy"
    header = f"{'variant':<24} {manifest.headline_metric:>12}"
    if with_accuracy:
        header += f" {'accuracy':>10}"
    print(header + f" {'shifted_acc':>12}")
    for row in rows:
        shifted = "n/a" if row["shifted_accuracy"] is None else f"{row['shifted_accuracy']:.4f}"
        line = f"{row['variant']:<24} {row['headline']:>12.4f}"
        if with_accuracy:
            line += f" {row['accuracy']:>10.4f}"
        print(line + f" {shifted:>12}")
    (out_dir / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _effective(args, "synth")
    _require(cfg, "out")
    dialogues = list(cfg["dialogues"])
    if len(dialogues) != 3:
        raise UsageError("--dialogues takes three counts: train val test")
    config = SynthConfig(
        seed=int(cfg["seed"]),
        num_dialogues={"train": int(dialogues[0]), "val": int(dialogues[1]),
                       "test": int(dialogues[2])},
        speaker_choices=tuple(int(s) for s in cfg["speakers"]),
        length_range=(int(cfg["length"][0]), int(cfg["length"][1])),
        num_classes=int(cfg["classes"]),
        p_shift=float(cfg["p_shift"]),
        noise_scale=float(cfg["noise"]),
        d_x=int(cfg["d_x"]),
        d_cs=int(cfg["d_cs"]),
        markov_stay=float(cfg["markov_stay"]),
    )
    out_dir = Path(cfg["out"])
    manifest_path, stats = write_synth_dataset(config, out_dir)
    _echo_config(cfg, out_dir, "synth")
    print(f"wrote {manifest_path} "
          f"({stats.shifted_turns}/{stats.eligible_turns} eligible turns shifted)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convemo",
        description="Commonsense-aware conversational emotion recognition: "
                    "train, evaluate, and inspect the recurrent state model.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file (flags take precedence)")

    # Subparser defaults are suppressed so that only explicitly passed flags
    # override config-file values; hard defaults live in _DEFAULTS.
    def add_command(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)

    p = add_command("train", "train on a manifest, keep the best validation checkpoint")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--mode", choices=sorted(_MODES))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--no-speaker-cs", dest="no_speaker_cs", action="store_true")
    p.add_argument("--no-listener-cs", dest="no_listener_cs", action="store_true")
    p.add_argument("--clip", type=float, help="max gradient norm")
    p.add_argument("--dropout", type=float)
    p.set_defaults(func=cmd_train)

    p = add_command("eval", "evaluate a checkpoint on a split")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--checkpoint")
    p.add_argument("--split")
    p.add_argument("--out")
    p.add_argument("--no-speaker-cs", dest="no_speaker_cs", action="store_true")
    p.add_argument("--no-listener-cs", dest="no_listener_cs", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = add_command("gradcheck", "finite-difference check of all parameter gradients")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--hidden", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = add_command("ablate", "train/eval the four commonsense ablation variants")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--mode", choices=sorted(_MODES))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--clip", type=float)
    p.add_argument("--dropout", type=float)
    p.set_defaults(func=cmd_ablate)

    p = add_command("synth", "write a synthetic verification dataset")
    common(p)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--dialogues", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--classes", type=int)
    p.add_argument("--p-shift", dest="p_shift", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--speakers", type=int, nargs="+")
    p.add_argument("--length", type=int, nargs=2, metavar=("MIN", "MAX"))
    p.add_argument("--d-x", dest="d_x", type=int)
    p.add_argument("--d-cs", dest="d_cs", type=int)
    p.add_argument("--markov-stay", dest="markov_stay", type=float)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParseError, ValidationError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, NonFiniteError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
