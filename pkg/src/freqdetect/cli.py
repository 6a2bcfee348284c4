"""Command-line entry point: corpus generation, training, evaluation, ablation, export.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path
from typing import Any

import numpy as np

from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .data import CorpusFormatError, generate_corpus, read_corpus, write_corpus
from .masks import export_masks
from .model import ModelConfig, TwoBranchModel, fusion_weight_matrix
from .optim import NonFiniteGradientError
from .training import (
    TrainConfig,
    TrainingDivergedError,
    evaluate_model,
    restore_model,
    train_adad,
    train_adat,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

# ablation grids: decomposition settings and fusion settings
TAB3_GRID: tuple[tuple[str, dict[str, Any]], ...] = (
    ("hard-binary", {"model.mask_mode": "hard", "model.mask_init": "binary", "model.gamma": 0.0}),
    ("soft-average", {"model.mask_mode": "soft_free", "model.mask_init": "average", "model.gamma": 0.0}),
    ("soft-average-triplet", {"model.mask_mode": "soft_free", "model.mask_init": "average", "model.gamma": 1.0}),
    ("soft-average-softmax-triplet", {"model.mask_mode": "soft_softmax", "model.mask_init": "average", "model.gamma": 1.0}),
    ("soft-binary", {"model.mask_mode": "soft_free", "model.mask_init": "binary", "model.gamma": 0.0}),
    ("soft-binary-triplet", {"model.mask_mode": "soft_free", "model.mask_init": "binary", "model.gamma": 1.0}),
    ("soft-binary-softmax-triplet", {"model.mask_mode": "soft_softmax", "model.mask_init": "binary", "model.gamma": 1.0}),
)
TAB4_GRID: tuple[tuple[str, dict[str, Any]], ...] = (
    ("all-at-entry", {"model.fusion": "all_entry"}),
    ("all-at-exit", {"model.fusion": "all_exit"}),
    ("predefined", {"model.fusion": "predefined"}),
    ("attention", {"model.fusion": "attention"}),
)

_TUPLE_KEYS = {"model.block_channels", "model.mask_thresholds"}


class UsageError(ValueError):
    """Bad flag/config combination; maps to exit code 2."""


def flatten_config(nested: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in nested.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten_config(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def _known_keys() -> dict[str, Any]:
    """Dotted key -> default value, for existence checks and type coercion."""
    defaults = TrainConfig()
    known: dict[str, Any] = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name == "model":
            continue
        known[f.name] = getattr(defaults, f.name)
    for f in dataclasses.fields(ModelConfig):
        known[f"model.{f.name}"] = getattr(defaults.model, f.name)
    return known


def _coerce_flag(key: str, raw: str, default: Any) -> Any:
    if key in _TUPLE_KEYS:
        return None if raw.lower() == "none" else tuple(int(part) for part in raw.split(","))
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise UsageError(f"expected a boolean for {key}, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def resolve_train_config(
    config_path: str | None,
    set_flags: list[str],
    seed: int | None = None,
) -> TrainConfig:
    """Defaults, overridden by a flat-dotted-key JSON file, then by flags."""
    known = _known_keys()
    resolved: dict[str, Any] = dict(known)

    if config_path is not None:
        try:
            raw = json.loads(Path(config_path).read_text())
        except OSError as exc:
            raise CorpusFormatError(f"cannot read config {config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {config_path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError(f"config {config_path} must hold a JSON object")
        for key, value in raw.items():
            if key not in known:
                raise UsageError(f"unknown config key {key!r}")
            if key in _TUPLE_KEYS and isinstance(value, list):
                value = tuple(value)
            resolved[key] = value

    for item in set_flags:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, _, raw_value = item.partition("=")
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
        resolved[key] = _coerce_flag(key, raw_value, known[key])

    if seed is not None:
        resolved["seed"] = seed
        resolved["model.seed"] = seed

    model_kwargs = {k.split(".", 1)[1]: v for k, v in resolved.items() if k.startswith("model.")}
    train_kwargs = {k: v for k, v in resolved.items() if not k.startswith("model.")}
    try:
        config = TrainConfig(model=ModelConfig(**model_kwargs), **train_kwargs)
        config.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return config


def _echo_config(out_dir: Path, payload: dict[str, Any]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _split_counts(count: int) -> tuple[int, int, int]:
    train = (2 * count) // 3
    val = (count - train) // 2
    return train, val, count - train - val


def cmd_gen(args: argparse.Namespace) -> int:
    splits = _split_counts(args.count)
    corpus = generate_corpus(
        seed=args.seed,
        sources=args.count,
        split_sizes=splits,
        n_domains=args.domains,
        height=args.size,
        width=args.size,
    )
    out = Path(args.out)
    write_corpus(corpus, out)
    _echo_config(
        out,
        {
            "command": "gen",
            "seed": args.seed,
            "count": args.count,
            "size": args.size,
            "domains": args.domains,
            "split_sizes": list(splits),
        },
    )
    print(f"wrote {len(corpus)} images to {out}")
    for split in ("train", "val", "test"):
        reals = len(corpus.indices(split=split, label=0))
        parts = [f"{split}: {reals} real"]
        for d in range(corpus.n_domains):
            parts.append(f"{len(corpus.indices(split=split, domain=d))} domain-{d}")
        print("  " + ", ".join(parts))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_train_config(args.config, args.set, args.seed)
    corpus = read_corpus(args.data)
    if args.phase == "adat":
        if args.resume is None:
            raise UsageError("--phase adat requires --resume with a phase=adad checkpoint")
        resume_config, resume_tensors = load_checkpoint(args.resume)
        try:
            result = train_adat(corpus, config, resume_config, resume_tensors)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        result = train_adad(corpus, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.ckpt", result.config, result.tensors)
    with open(out / "train_log.jsonl", "w") as fh:
        for line in result.logs:
            fh.write(json.dumps(line, sort_keys=True) + "\n")
    _echo_config(out, {"command": "train", "phase": args.phase, **flatten_config(config.to_dict())})
    best = result.config["best"]
    print(f"phase={args.phase} checkpoint written to {out / 'checkpoint.ckpt'}")
    print(f"best val_acc={best['val_acc']} val_auc={best['val_auc']}")
    return EXIT_OK


def _format_report(report, per_domain: bool) -> list[str]:
    auc = "undefined" if report.auc is None else f"{report.auc:.6f}"
    lines = [f"n={report.n} acc={report.acc:.6f} auc={auc}"]
    if per_domain:
        for d, row in sorted(report.domains.items()):
            row_auc = "undefined" if row["auc"] is None else f"{row['auc']:.6f}"
            lines.append(f"domain {d}: n_fake={row['n_fake']} acc={row['acc']:.6f} auc={row_auc}")
    return lines


def cmd_eval(args: argparse.Namespace) -> int:
    config, tensors = load_checkpoint(args.checkpoint)
    corpus = read_corpus(args.data)
    model = restore_model(config, tensors)
    report = evaluate_model(model, corpus, split=args.split)
    for line in _format_report(report, args.per_domain):
        print(line)
    out_dir = Path(args.out) if args.out else Path(args.checkpoint).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"split": args.split, **report.to_dict()}
    (out_dir / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    grid = TAB3_GRID if args.grid == "tab3" else TAB4_GRID
    corpus = read_corpus(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows: list[tuple[str, str, str]] = []
    succeeded = 0
    for label, overrides in grid:
        set_flags = list(args.set) + [f"{k}={_flag_repr(v)}" for k, v in overrides.items()]
        try:
            config = resolve_train_config(args.config, set_flags, args.seed)
            result = train_adad(corpus, config)
            report = evaluate_model(restore_model(result.config, result.tensors), corpus, "test")
            auc = "undefined" if report.auc is None else f"{report.auc:.6f}"
            rows.append((label, f"{report.acc:.6f}", auc))
            succeeded += 1
        except (TrainingDivergedError, NonFiniteGradientError, ValueError) as exc:
            print(f"{label}: FAILED ({exc})", file=sys.stderr)
            rows.append((label, "FAILED", "FAILED"))
    with open(out / f"{args.grid}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "acc", "auc"])
        writer.writerows(rows)
    _echo_config(out, {"command": "ablate", "grid": args.grid, "seed": args.seed,
                       "rows": [r[0] for r in rows]})
    for row in rows:
        print(",".join(row))
    return EXIT_OK if succeeded > 0 else EXIT_NUMERIC


def _flag_repr(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def cmd_export(args: argparse.Namespace) -> int:
    config, tensors = load_checkpoint(args.checkpoint)
    model = restore_model(config, tensors)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    want_masks = args.masks or not (args.masks or args.attention)
    want_attention = args.attention or not (args.masks or args.attention)

    wrote = []
    if want_masks:
        if model.mask_bank is None:
            if args.masks:
                raise UsageError("checkpoint has no mask bank (fusion scheme 'none')")
        else:
            wrote.extend(export_masks(model.mask_bank, str(out)))
    if want_attention:
        cfg = model.config
        if cfg.fusion == "none":
            if args.attention:
                raise UsageError("checkpoint has no fusion weights (fusion scheme 'none')")
        else:
            weights = fusion_weight_matrix(cfg.fusion, cfg.n_bands, cfg.layer_count, model.att_logits)
            path = out / "attention.txt"
            np.savetxt(path, weights.data, fmt="%.17g")
            wrote.append(str(path))
    for path in wrote:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqdetect",
        description="Adaptive frequency-decomposition forgery detector toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic corpus directory")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--size", type=int, default=64, help="square image side length")
    p_gen.add_argument("--count", type=int, default=600, help="number of pristine source images")
    p_gen.add_argument("--domains", type=int, default=3)
    p_gen.set_defaults(func=cmd_gen)

    p_train = sub.add_parser("train", help="train a detector phase")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--phase", choices=("adad", "adat"), default="adad")
    p_train.add_argument("--resume", default=None, help="adad checkpoint (required for adat)")
    p_train.add_argument("--config", default=None, help="JSON file with flat dotted keys")
    p_train.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a corpus split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--split", default="test")
    p_eval.add_argument("--per-domain", action="store_true")
    p_eval.add_argument("--out", default=None, help="directory for report.json")
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="run a config grid and emit CSV")
    p_ablate.add_argument("--grid", choices=("tab3", "tab4"), required=True)
    p_ablate.add_argument("--data", required=True)
    p_ablate.add_argument("--out", required=True)
    p_ablate.add_argument("--config", default=None)
    p_ablate.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p_ablate.add_argument("--seed", type=int, default=0)
    p_ablate.set_defaults(func=cmd_ablate)

    p_export = sub.add_parser("export", help="dump masks and fusion weights")
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--out", required=True)
    p_export.add_argument("--masks", action="store_true")
    p_export.add_argument("--attention", action="store_true")
    p_export.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusFormatError, CheckpointFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingDivergedError, NonFiniteGradientError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
