"""Adam training loop, evaluation, and repeated-seed benchmarking."""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import DatasetSplit, LabeledImage, batch_iter, stack
from .kan import kan_update_grids
from .models import Model, ModelSpec, build_model, param_count, save_checkpoint
from .nn import softmax_cross_entropy
from .tensor import Tape, Tensor


class NonFiniteLossError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    grid_update: bool = False
    repeats: int = 10
    # KAN grid refresh cadence: every `grid_every` epochs while epoch < `grid_until`
    grid_every: int = 5
    grid_until: int = 50
    grid_samples: int = 256

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        for name in ("batch_size", "repeats", "grid_every", "grid_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.lr > 0 or not self.eps > 0:
            raise ValueError("lr and eps must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig) -> None:
    """Bias-corrected Adam update, in place on the arrays in ``params``."""
    state.step += 1
    t = state.step
    c1 = 1.0 - config.beta1**t
    c2 = 1.0 - config.beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"adam_step: gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * (g * g)
        p -= config.lr * (m / c1) / (np.sqrt(v / c2) + config.eps)


@dataclass
class RunReport:
    model: str
    seed: int
    param_count: int
    epochs: list[dict] = field(default_factory=list)
    test_accuracy: float = float("nan")
    seconds: float = 0.0
    trained: Model | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "seed": self.seed,
            "param_count": self.param_count,
            "epochs": [dict(e) for e in self.epochs],
            "test_accuracy": self.test_accuracy,
            "seconds": self.seconds,
        }

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "train_acc", "val_acc"])
        for e in self.epochs:
            val = "" if e["val_acc"] is None else repr(e["val_acc"])
            w.writerow([e["epoch"], repr(e["train_loss"]), repr(e["train_acc"]), val])
        return buf.getvalue()


def predict(model: Model, x: np.ndarray, batch: int = 128) -> np.ndarray:
    """Logits for ``x`` computed in chunks, without recording a tape."""
    outs = [model(Tensor(x[i : i + batch])).data for i in range(0, len(x), batch)]
    return np.concatenate(outs) if outs else np.zeros((0, model.spec.n_classes))


def evaluate(model: Model, images: Sequence[LabeledImage]) -> float:
    """Fraction of images whose argmax logit (lowest index on ties) is the label."""
    if not images:
        raise ValueError("evaluate needs at least one image")
    x, y = stack(images)
    return float(np.mean(np.argmax(predict(model, x), axis=1) == y))


def update_model_grids(model: Model, x: np.ndarray, blend: float | None = None) -> None:
    """Adapt every KAN layer's grids to the activations that ``x`` produces there."""
    kwargs = {} if blend is None else {"blend": blend}
    h = Tensor(x)
    for layer in model.layers:
        if layer.kind == "kan":
            kan_update_grids(layer, h, **kwargs)
        h = layer(h)


def train_model(
    spec: ModelSpec,
    split: DatasetSplit,
    config: TrainConfig,
    progress: Callable[[dict], None] | None = None,
) -> RunReport:
    model = build_model(spec, config.seed)
    params = dict(model.trainable())
    report = RunReport(spec.name, config.seed, param_count(model), trained=model)
    state = AdamState()
    grid_x = stack(split.train[: config.grid_samples])[0] if split.train else None
    start = time.perf_counter()
    for epoch in range(config.epochs):
        if config.grid_update and epoch % config.grid_every == 0 and epoch < config.grid_until and model.kan_layers():
            update_model_grids(model, grid_x)
        loss_sum, correct, seen = 0.0, 0, 0
        for bi, (xb, yb) in enumerate(batch_iter(split.train, config.batch_size, config.seed, epoch)):
            for t in params.values():
                t.zero_grad()
            with Tape() as tape:
                logits = model(Tensor(xb))
                loss = softmax_cross_entropy(logits, yb)
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteLossError(f"{spec.name} seed {config.seed}: loss {value} at epoch {epoch} batch {bi}")
            tape.backward(loss)
            adam_step({n: t.data for n, t in params.items()}, {n: t.grad for n, t in params.items()}, state, config)
            loss_sum += value * len(yb)
            correct += int(np.sum(np.argmax(logits.data, axis=1) == yb))
            seen += len(yb)
        row = {
            "epoch": epoch + 1,
            "train_loss": loss_sum / max(seen, 1),
            "train_acc": correct / max(seen, 1),
            "val_acc": evaluate(model, split.val) if split.val else None,
        }
        report.epochs.append(row)
        if progress:
            progress(row)
    report.seconds = time.perf_counter() - start
    report.test_accuracy = evaluate(model, split.test)
    return report


def write_run(report: RunReport, out_dir, checkpoint: bool = True) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    (out / "metrics.csv").write_text(report.metrics_csv())
    if checkpoint and report.trained is not None:
        save_checkpoint(report.trained, out / "checkpoint.bin")
    return out


def sample_std(values: Sequence[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def format_row(row: dict) -> str:
    return f"{row['model']}, {row['mean']:.3f} +/- {row['std']:.3f}, {row['seconds']:.1f}, {row['params']}"


@dataclass
class BenchmarkResult:
    rows: list[dict]
    runs: list[RunReport]

    def table(self) -> str:
        return "\n".join(format_row(r) for r in self.rows)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "runs": [r.to_dict() for r in self.runs]}

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "mean_test_accuracy", "std_test_accuracy", "summary", "mean_seconds", "params", "repeats"])
        for r in self.rows:
            w.writerow([r["model"], repr(r["mean"]), repr(r["std"]), f"{r['mean']:.3f} +/- {r['std']:.3f}",
                        repr(r["seconds"]), r["params"], r["repeats"]])
        return buf.getvalue()


def benchmark(
    specs: Sequence[ModelSpec],
    split: DatasetSplit,
    config: TrainConfig,
    out_dir=None,
    progress: Callable[[str], None] | None = None,
) -> BenchmarkResult:
    """Train every spec with seeds ``seed + 0 .. seed + repeats - 1`` and aggregate."""
    rows, runs = [], []
    for spec in specs:
        reports = []
        for r in range(config.repeats):
            cfg = TrainConfig(**{**asdict(config), "seed": config.seed + r})
            rep = train_model(spec, split, cfg)
            if out_dir is not None:
                write_run(rep, Path(out_dir) / f"{spec.name}_seed{cfg.seed}", checkpoint=False)
            if progress:
                progress(f"{spec.name} seed {cfg.seed}: test accuracy {rep.test_accuracy:.4f} ({rep.seconds:.1f}s)")
            rep.trained = None
            reports.append(rep)
        accs = [rep.test_accuracy for rep in reports]
        rows.append({
            "model": spec.name,
            "mean": float(np.mean(accs)),
            "std": sample_std(accs),
            "seconds": float(np.mean([rep.seconds for rep in reports])),
            "params": reports[0].param_count,
            "repeats": len(reports),
            "accuracies": accs,
        })
        runs += reports
    result = BenchmarkResult(rows, runs)
    if out_dir is not None:
        out = Path(out_dir)
        (out / "aggregate.json").write_text(json.dumps(result.to_dict(), indent=2) + "\n")
        (out / "aggregate.csv").write_text(result.csv())
    return result
