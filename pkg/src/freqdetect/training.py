"""Two-phase training protocol and evaluation.

Phase one ("adad") trains the full detector with fixed orthonormal spectral
transforms. Phase two ("adat") swaps in learnable transform matrices
initialised from the fixed basis and fine-tunes at a reduced learning rate.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np

from .autodiff import GradientTape, Tensor
from .data import Corpus, balance_resample
from .metrics import accuracy, domain_breakdown, roc_auc
from .model import ModelConfig, TwoBranchModel
from .optim import AdamMoments, adam_step, cosine_lr

__all__ = [
    "TrainConfig",
    "TrainResult",
    "EvalReport",
    "TrainingDivergedError",
    "train_config_from_dict",
    "model_state",
    "load_model_state",
    "restore_model",
    "model_scores",
    "evaluate_model",
    "evaluate_checkpoint",
    "train_adad",
    "train_adat",
]

# salt separating the epoch resampling stream from forgery seed streams
_RESAMPLE_SALT = 9241


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the offending optimizer step index."""

    def __init__(self, step: int, value: float):
        self.step = step
        super().__init__(f"non-finite loss {value!r} at step {step}")


@dataclass
class TrainConfig:
    """Optimization protocol knobs plus the nested architecture config.

    Defaults are desk scale; fidelity-scale values are batch=32 and
    adat_iters=2500.
    """

    lr0: float = 0.001
    batch: int = 16
    adad_epochs: int = 15
    adat_iters: int = 500
    adat_lr_scale: float = 0.1
    eval_interval: int = 50
    unfreeze_all: bool = True
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)

    def validate(self) -> None:
        for name in ("lr0", "batch", "adad_epochs", "adat_iters", "adat_lr_scale", "eval_interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"TrainConfig.{name} must be positive, got {getattr(self, name)}")
        self.model.validate()

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def train_config_from_dict(raw: dict[str, Any]) -> TrainConfig:
    """Inverse of TrainConfig.to_dict, tolerant of JSON list-for-tuple."""
    raw = dict(raw)
    model_raw = dict(raw.pop("model", {}))
    if model_raw.get("block_channels") is not None:
        model_raw["block_channels"] = tuple(model_raw["block_channels"])
    if model_raw.get("mask_thresholds") is not None:
        model_raw["mask_thresholds"] = tuple(model_raw["mask_thresholds"])
    config = TrainConfig(model=ModelConfig(**model_raw), **raw)
    config.validate()
    return config


@dataclass(frozen=True)
class TrainResult:
    """In-memory checkpoint: config block, named tensors, training log."""

    config: dict[str, Any]
    tensors: dict[str, np.ndarray]
    logs: list[dict[str, Any]]


@dataclass(frozen=True)
class EvalReport:
    acc: float
    auc: float | None
    n: int
    domains: dict[int, dict[str, float | None]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "acc": self.acc,
            "auc": self.auc,
            "n": self.n,
            "domains": {str(d): dict(row) for d, row in self.domains.items()},
        }


def model_state(model: TwoBranchModel) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.parameters()}


def load_model_state(model: TwoBranchModel, tensors: dict[str, np.ndarray]) -> None:
    params = dict(model.parameters())
    missing = sorted(set(params) - set(tensors))
    extra = sorted(set(tensors) - set(params))
    if missing or extra:
        raise ValueError(f"checkpoint/model parameter mismatch: missing {missing}, extra {extra}")
    for name, p in params.items():
        if tensors[name].shape != p.data.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: checkpoint {tensors[name].shape}, model {p.data.shape}"
            )
        p.data = tensors[name].astype(np.float64).copy()


def restore_model(config: dict[str, Any], tensors: dict[str, np.ndarray]) -> TwoBranchModel:
    """Rebuild a model from a checkpoint's config block and parameter tensors."""
    train_config = train_config_from_dict(config["train"])
    model = TwoBranchModel(train_config.model)
    if any(name.startswith("transform.") for name in tensors):
        model.enable_adat()
    load_model_state(model, {k: v for k, v in tensors.items() if not k.startswith("adam.")})
    return model


def _snapshot(model: TwoBranchModel, moments: AdamMoments) -> dict[str, np.ndarray]:
    # moment arrays are mutated in place by adam_step, so copy them here
    out = model_state(model)
    out.update({name: arr.copy() for name, arr in moments.state().items()})
    return out


def model_scores(model: TwoBranchModel, corpus: Corpus, indices: np.ndarray, batch: int = 64) -> np.ndarray:
    """Forged-class probabilities for the given corpus rows, in order."""
    chunks = []
    for start in range(0, len(indices), batch):
        rows = indices[start : start + batch]
        images = Tensor(corpus.images[rows].astype(np.float64))
        chunks.append(model.forward(images).probability.data)
    return np.concatenate(chunks) if chunks else np.zeros(0)


def evaluate_model(model: TwoBranchModel, corpus: Corpus, split: str = "test") -> EvalReport:
    indices = corpus.indices(split=split)
    if indices.size == 0:
        raise ValueError(f"split {split!r} is empty")
    scores = model_scores(model, corpus, indices)
    labels = corpus.labels[indices]
    domains = corpus.domains[indices]
    return EvalReport(
        acc=accuracy(scores, labels),
        auc=roc_auc(scores, labels),
        n=int(indices.size),
        domains=domain_breakdown(scores, labels, domains),
    )


def evaluate_checkpoint(
    config: dict[str, Any],
    tensors: dict[str, np.ndarray],
    corpus: Corpus,
    split: str = "test",
) -> EvalReport:
    return evaluate_model(restore_model(config, tensors), corpus, split)


def _epoch_order(corpus: Corpus, seed: int, epoch: int) -> np.ndarray:
    epoch_seed = int(np.random.SeedSequence([seed, epoch, _RESAMPLE_SALT]).generate_state(1)[0])
    return balance_resample(corpus, epoch_seed, split="train")


def _train_step(
    model: TwoBranchModel,
    trained: list[tuple[str, Tensor]],
    moments: AdamMoments,
    corpus: Corpus,
    rows: np.ndarray,
    lr: float,
    step: int,
) -> tuple[float, float, float]:
    images = Tensor(corpus.images[rows].astype(np.float64))
    labels = corpus.labels[rows]
    try:
        with GradientTape() as tape:
            breakdown = model.loss(images, labels)
    except ValueError as exc:
        # the model guards against non-finite logits before the loss is formed
        if "non-finite" in str(exc):
            raise TrainingDivergedError(step, float("nan")) from exc
        raise
    value = breakdown.total.item()
    if not np.isfinite(value):
        raise TrainingDivergedError(step, value)
    grads = tape.backward(breakdown.total)
    adam_step(trained, grads, moments, lr, step)
    return value, breakdown.cross_entropy.item(), breakdown.triplet.item()


def _trained_parameters(model: TwoBranchModel, unfreeze_all: bool) -> list[tuple[str, Tensor]]:
    params = model.parameters()
    if unfreeze_all:
        return params
    kept = [(n, p) for n, p in params if n.startswith("transform.")]
    if not kept:
        raise ValueError("unfreeze_all=False requires learnable transforms to train")
    return kept


def train_adad(
    corpus: Corpus,
    config: TrainConfig,
    epoch_hook: Callable[[TwoBranchModel, int], None] | None = None,
) -> TrainResult:
    """Phase-one training with fixed spectral transforms.

    Each epoch draws a fresh class-balanced resample of the train split,
    steps Adam under a cosine schedule, then evaluates on the validation
    split. The returned tensors are the validation-AUC-best snapshot.
    """
    config.validate()
    model = TwoBranchModel(config.model)
    trained = _trained_parameters(model, unfreeze_all=True)
    moments = AdamMoments(trained)

    steps_per_epoch = len(_epoch_order(corpus, config.seed, 0)) // config.batch
    if steps_per_epoch == 0:
        raise ValueError(f"train split too small for batch size {config.batch}")
    total_steps = config.adad_epochs * steps_per_epoch

    logs: list[dict[str, Any]] = []
    step = 0
    best_auc = -np.inf
    best = {"epoch": -1, "step": 0, "val_acc": None, "val_auc": None}
    snapshot = _snapshot(model, moments)

    for epoch in range(config.adad_epochs):
        order = _epoch_order(corpus, config.seed, epoch)
        losses = np.zeros((steps_per_epoch, 3))
        for b in range(steps_per_epoch):
            lr = cosine_lr(step, total_steps, config.lr0)
            rows = order[b * config.batch : (b + 1) * config.batch]
            losses[b] = _train_step(model, trained, moments, corpus, rows, lr, step + 1)
            step += 1
        report = evaluate_model(model, corpus, split="val")
        logs.append(
            {
                "phase": "adad",
                "epoch": epoch,
                "step": step,
                "lr": cosine_lr(step, total_steps, config.lr0),
                "loss": float(losses[:, 0].mean()),
                "loss_ce": float(losses[:, 1].mean()),
                "loss_trip": float(losses[:, 2].mean()),
                "val_acc": report.acc,
                "val_auc": report.auc,
            }
        )
        if report.auc is not None and report.auc > best_auc:
            best_auc = report.auc
            best = {"epoch": epoch, "step": step, "val_acc": report.acc, "val_auc": report.auc}
            snapshot = _snapshot(model, moments)
        if epoch_hook is not None:
            epoch_hook(model, epoch)

    header = {"phase": "adad", "step": best["step"], "best": best, "train": config.to_dict()}
    return TrainResult(config=header, tensors=snapshot, logs=logs)


def train_adat(
    corpus: Corpus,
    config: TrainConfig,
    resume_config: dict[str, Any],
    resume_tensors: dict[str, np.ndarray],
) -> TrainResult:
    """Phase-two fine-tune: learnable transforms initialised from the fixed basis.

    Requires a phase-one checkpoint. Runs adat_iters optimizer steps at
    lr0 * adat_lr_scale under a fresh cosine schedule, evaluating every
    eval_interval steps.
    """
    config.validate()
    phase = resume_config.get("phase")
    if phase != "adad":
        raise ValueError(f"adat fine-tune requires a phase=adad checkpoint, got phase={phase!r}")

    model = restore_model(resume_config, resume_tensors)
    model.enable_adat()
    trained = _trained_parameters(model, config.unfreeze_all)
    moments = AdamMoments(trained)
    lr0 = config.lr0 * config.adat_lr_scale

    logs: list[dict[str, Any]] = []
    # seed best-tracking with the iteration-0 state so a fine-tune that never
    # improves on the restored checkpoint cannot regress below it
    baseline = evaluate_model(model, corpus, split="val")
    best_auc = baseline.auc if baseline.auc is not None else -np.inf
    best = {"iteration": 0, "val_acc": baseline.acc, "val_auc": baseline.auc}
    snapshot = _snapshot(model, moments)

    order = _epoch_order(corpus, config.seed, 0)
    cursor, pass_index = 0, 0
    loss_window: list[tuple[float, float, float]] = []
    for step in range(1, config.adat_iters + 1):
        if cursor + config.batch > len(order):
            pass_index += 1
            order = _epoch_order(corpus, config.seed, pass_index)
            cursor = 0
        rows = order[cursor : cursor + config.batch]
        cursor += config.batch
        lr = cosine_lr(step - 1, config.adat_iters, lr0)
        loss_window.append(_train_step(model, trained, moments, corpus, rows, lr, step))
        if step % config.eval_interval == 0 or step == config.adat_iters:
            report = evaluate_model(model, corpus, split="val")
            window = np.asarray(loss_window)
            loss_window = []
            logs.append(
                {
                    "phase": "adat",
                    "iteration": step,
                    "lr": lr,
                    "loss": float(window[:, 0].mean()),
                    "loss_ce": float(window[:, 1].mean()),
                    "loss_trip": float(window[:, 2].mean()),
                    "val_acc": report.acc,
                    "val_auc": report.auc,
                }
            )
            if report.auc is not None and report.auc > best_auc:
                best_auc = report.auc
                best = {"iteration": step, "val_acc": report.acc, "val_auc": report.auc}
                snapshot = _snapshot(model, moments)

    header = {"phase": "adat", "step": best["iteration"], "best": best, "train": config.to_dict()}
    return TrainResult(config=header, tensors=snapshot, logs=logs)
