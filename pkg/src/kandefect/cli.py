"""Command-line entry point.

Every subcommand resolves its settings as defaults < ``--config`` JSON file <
explicit flags, validates them before doing any work, and prints the resolved
settings as one ``config {...}`` JSON line.  Commands with an ``--out``
directory also save them there as ``config.json``, minus ``out`` itself.
``params`` prints only the count on stdout and echoes its config on stderr.

Exit codes: 0 success, 2 usage error, 1 runtime failure.  Failures print one
JSON line ``{"error": <kind>, "message": <text>}`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import (
    NEU_CLASSES,
    DatasetSplit,
    apply_split_manifest,
    generate_synthetic,
    load_image_folder,
    stratified_split,
    write_image_folder,
    write_split_manifest,
)
from .gradcheck import PRIMITIVES, TOLERANCE, run_suite
from .models import MODEL_NAMES, ModelSpec, build_model, load_checkpoint, param_count, read_checkpoint
from .train import TrainConfig, benchmark, evaluate, train_model, write_run


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dims(text: str, n: int, what: str) -> list[int]:
    parts = str(text).lower().split("x")
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        dims = []
    if len(dims) != n or min(dims) < 1:
        raise UsageError(f"{what} must look like {'x'.join('N' * n)} with positive integers, got {text!r}")
    return dims


DEFAULTS = {
    "synth-gen": {"out": None, "per_class": 100, "size": "64x64", "seed": 0, "channels": 1},
    "train": {
        "model": None, "data": None, "out": None, "epochs": 100, "batch": 32, "lr": 1e-3, "seed": 0,
        "input": "1x64x64", "grid_update": False, "split_seed": 0, "split": None,
    },
    "eval": {"checkpoint": None, "data": None, "split": None, "part": "all"},
    "params": {"model": None, "input": "1x64x64", "classes": 6},
    "gradcheck": {"trials": 100, "seed": 0, "ops": ",".join(PRIMITIVES)},
    "benchmark": {
        "models": None, "data": None, "out": None, "repeats": 10, "seed": 0, "epochs": 100, "batch": 32,
        "lr": 1e-3, "input": "1x64x64", "grid_update": False, "split_seed": 0, "split": None,
    },
}
REQUIRED = {
    "synth-gen": ("out",),
    "train": ("model", "data", "out"),
    "eval": ("checkpoint", "data"),
    "params": ("model",),
    "gradcheck": (),
    "benchmark": ("models", "data", "out"),
}


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="kandefect", description="KAN and CNN defect classifiers on CPU.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def command(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=S)
        p.add_argument("--config", help="JSON file with defaults for this command's flags")
        return p

    p = command("synth-gen", "write a synthetic six-class defect dataset as PGM folders")
    p.add_argument("--out")
    p.add_argument("--per-class", dest="per_class", type=int)
    p.add_argument("--size", help="HxW")
    p.add_argument("--seed", type=int)
    p.add_argument("--channels", type=int)

    def training_flags(p):
        p.add_argument("--data", help="root/<class>/*.pgm")
        p.add_argument("--out")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--input", help="CxHxW model input; images are resized to HxW")
        p.add_argument("--grid-update", dest="grid_update", action="store_true")
        p.add_argument("--split-seed", dest="split_seed", type=int, help="seed of the 80/10/10 split")
        p.add_argument("--split", help="existing split manifest to reuse instead of splitting")

    p = command("train", "train one model and write report.json, metrics.csv, checkpoint.bin")
    p.add_argument("--model", choices=MODEL_NAMES)
    training_flags(p)

    p = command("eval", "accuracy of a checkpoint on a PGM folder")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--split", help="split manifest; with --part selects a subset")
    p.add_argument("--part", choices=("all", "train", "val", "test"))

    p = command("params", "print the exact learnable parameter count")
    p.add_argument("--model", choices=MODEL_NAMES)
    p.add_argument("--input", help="CxHxW")
    p.add_argument("--classes", type=int)

    p = command("gradcheck", "finite-difference check of every differentiable primitive")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ops", help="comma-separated subset of " + ",".join(PRIMITIVES))

    p = command("benchmark", "repeat training over seeds and aggregate mean +/- std")
    p.add_argument("--models", help="comma-separated model names")
    training_flags(p)
    p.add_argument("--repeats", type=int)
    return parser


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, the optional JSON config file and explicit flags, then validate."""
    explicit = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    from_file = {}
    if getattr(args, "config", None):
        try:
            from_file = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read --config {args.config}: {exc}") from None
        if not isinstance(from_file, dict):
            raise UsageError("--config must hold a JSON object")
        from_file = {k.replace("-", "_"): v for k, v in from_file.items()}
        unknown = sorted(set(from_file) - set(DEFAULTS[command]))
        if unknown:
            raise UsageError(f"--config has unknown keys for {command}: {', '.join(unknown)}")
    cfg = {**DEFAULTS[command], **from_file, **explicit}
    missing = [k for k in REQUIRED[command] if cfg.get(k) in (None, "")]
    if missing:
        raise UsageError(f"{command}: missing required " + ", ".join("--" + k.replace("_", "-") for k in missing))
    _validate(command, cfg)
    return cfg


def _validate(command: str, cfg: dict) -> None:
    def positive(*keys):
        for k in keys:
            v = cfg[k]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise UsageError(f"--{k.replace('_', '-')} must be positive, got {v!r}")

    def integer(*keys):
        for k in keys:
            if isinstance(cfg[k], bool) or not isinstance(cfg[k], int):
                raise UsageError(f"--{k.replace('_', '-')} must be an integer, got {cfg[k]!r}")

    if command == "synth-gen":
        integer("per_class", "seed", "channels")
        positive("per_class")
        _dims(cfg["size"], 2, "--size")
        if cfg["channels"] not in (1, 3):
            raise UsageError(f"--channels must be 1 or 3, got {cfg['channels']}")
    elif command in ("train", "benchmark"):
        integer("epochs", "batch", "seed", "split_seed")
        positive("batch", "lr")
        if cfg["epochs"] < 0:
            raise UsageError(f"--epochs must be >= 0, got {cfg['epochs']}")
        _dims(cfg["input"], 3, "--input")
        names = [cfg["model"]] if command == "train" else str(cfg["models"]).split(",")
        for name in names:
            if name not in MODEL_NAMES:
                raise UsageError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
        if command == "benchmark":
            integer("repeats")
            positive("repeats")
        if not isinstance(cfg["grid_update"], bool):
            raise UsageError("grid_update must be true or false")
    elif command == "eval":
        if cfg["part"] not in ("all", "train", "val", "test"):
            raise UsageError(f"--part must be all, train, val or test, got {cfg['part']!r}")
        if cfg["part"] != "all" and not cfg["split"]:
            raise UsageError("--part needs --split")
    elif command == "params":
        if cfg["model"] not in MODEL_NAMES:
            raise UsageError(f"unknown model {cfg['model']!r}; choose from {', '.join(MODEL_NAMES)}")
        integer("classes")
        positive("classes")
        _dims(cfg["input"], 3, "--input")
    elif command == "gradcheck":
        integer("trials", "seed")
        positive("trials")
        bad = [op for op in str(cfg["ops"]).split(",") if op not in PRIMITIVES]
        if bad:
            raise UsageError(f"unknown ops {', '.join(bad)}; choose from {', '.join(PRIMITIVES)}")


def _echo(cfg: dict, stream=None) -> None:
    print("config " + json.dumps(cfg, sort_keys=True), file=stream or sys.stdout, flush=True)


def _save_config(cfg: dict, out: Path) -> None:
    # the file's own location stands in for "out", so identical runs write identical files
    out.mkdir(parents=True, exist_ok=True)
    saved = {k: v for k, v in cfg.items() if k != "out"}
    (out / "config.json").write_text(json.dumps(saved, indent=2, sort_keys=True) + "\n")


def _load_split(cfg: dict, shape: list[int]) -> DatasetSplit:
    images, names = load_image_folder(cfg["data"], resize=shape[1:], channels=shape[0])
    if cfg["split"]:
        return apply_split_manifest(images, cfg["split"])
    return stratified_split(images, seed=cfg["split_seed"], class_names=names)


def _train_config(cfg: dict, **extra) -> TrainConfig:
    return TrainConfig(
        epochs=cfg["epochs"], batch_size=cfg["batch"], lr=cfg["lr"], seed=cfg["seed"],
        grid_update=cfg["grid_update"], **extra,
    )


def cmd_synth_gen(cfg: dict) -> None:
    out = Path(cfg["out"])
    h, w = _dims(cfg["size"], 2, "--size")
    images = generate_synthetic(cfg["per_class"], (h, w), seed=cfg["seed"], channels=cfg["channels"])
    write_image_folder(images, out, NEU_CLASSES)
    _save_config(cfg, out)
    print(f"wrote {len(images)} images to {out}")


def cmd_train(cfg: dict) -> None:
    shape = _dims(cfg["input"], 3, "--input")
    out = Path(cfg["out"])
    split = _load_split(cfg, shape)
    spec = ModelSpec(cfg["model"], tuple(shape), len(split.class_names))
    _save_config(cfg, out)
    write_split_manifest(split, out / "split.json")

    def progress(row):
        val = "" if row["val_acc"] is None else f" val_acc={row['val_acc']:.4f}"
        print(f"epoch {row['epoch']} train_loss={row['train_loss']:.6f} train_acc={row['train_acc']:.4f}{val}", flush=True)

    report = train_model(spec, split, _train_config(cfg), progress)
    write_run(report, out)
    print(f"test_accuracy {report.test_accuracy:.6f} seconds {report.seconds:.1f} params {report.param_count}")


def cmd_eval(cfg: dict) -> None:
    header, _ = read_checkpoint(cfg["checkpoint"])
    model = load_checkpoint(cfg["checkpoint"])
    c, h, w = model.spec.input_shape
    images, names = load_image_folder(cfg["data"], resize=(h, w), channels=c)
    if len(names) != model.spec.n_classes:
        raise ValueError(f"checkpoint has {model.spec.n_classes} classes but {cfg['data']} has {len(names)}")
    if cfg["part"] != "all":
        images = getattr(apply_split_manifest(images, cfg["split"]), cfg["part"])
    acc = evaluate(model, images)
    print(f"accuracy {acc:.6f} images {len(images)} model {header['spec']['name']}")


def cmd_params(cfg: dict) -> None:
    shape = _dims(cfg["input"], 3, "--input")
    print(param_count(build_model(ModelSpec(cfg["model"], tuple(shape), cfg["classes"]), 0)))


def cmd_gradcheck(cfg: dict) -> None:
    results = run_suite(cfg["trials"], cfg["seed"], cfg["ops"].split(","))
    for name, err in results.items():
        print(f"{name} {err:.3e} {'ok' if err < TOLERANCE else 'FAIL'}")
    failed = [n for n, e in results.items() if not e < TOLERANCE]
    if failed:
        raise RuntimeError(f"gradient check above {TOLERANCE:g} for {', '.join(failed)}")


def cmd_benchmark(cfg: dict) -> None:
    shape = _dims(cfg["input"], 3, "--input")
    out = Path(cfg["out"])
    split = _load_split(cfg, shape)
    specs = [ModelSpec(n, tuple(shape), len(split.class_names)) for n in cfg["models"].split(",")]
    _save_config(cfg, out)
    write_split_manifest(split, out / "split.json")
    result = benchmark(specs, split, _train_config(cfg, repeats=cfg["repeats"]), out, progress=print)
    print(result.table())


COMMANDS = {
    "synth-gen": cmd_synth_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "params": cmd_params,
    "gradcheck": cmd_gradcheck,
    "benchmark": cmd_benchmark,
}


def _fail(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": " ".join(str(message).split())}), file=sys.stderr)


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand; choose from " + ", ".join(COMMANDS))
        cfg = resolve(args.command, args)
    except UsageError as exc:
        _fail("usage", exc)
        return 2
    _echo(cfg, sys.stderr if args.command == "params" else None)
    try:
        COMMANDS[args.command](cfg)
    except KeyboardInterrupt:
        _fail("interrupted", "interrupted")
        return 1
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit code 1
        _fail(type(exc).__name__, exc)
        return 1
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
