"""Natural and adversarial (min-max) training for the dense classifier.

Adversarial training attacks each batch with PGD through the full pipeline
(using the straight-through rule when a binarizer is present) and then
descends on the perturbed batch. Checkpoints record clean and adversarial
accuracy on an evaluation split; recorded wall time covers training work
only, not checkpoint evaluation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import netcore
from .attack import AttackConfig, attack_dataset, derive_seed, pgd, preset
from .binarize import ThresholdBinarizer
from .data import Dataset
from .errors import NumericalError
from .pipeline import ModelPipeline

MODEL_KINDS = ("natural", "bin", "mat", "bat")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int
    batch_size: int = 64
    learning_rate: float = 0.1
    seed: int = 0
    adversarial: AttackConfig | None = None  # inner-maximization attack
    checkpoint_every: int = 0  # 0 = final checkpoint only
    eval_size: int = 200
    eval_attack: AttackConfig | None = None  # defaults to the "trace" preset

    def __post_init__(self) -> None:
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


@dataclass
class CheckpointRow:
    iteration: int
    clean_acc: float
    adv_acc: float
    seconds: float

    def csv_row(self) -> str:
        return f"{self.iteration},{self.clean_acc:.6f},{self.adv_acc:.6f},{self.seconds:.3f}"


@dataclass
class TrainingTrace:
    checkpoints: list[CheckpointRow] = field(default_factory=list)

    CSV_HEADER = "iteration,clean_acc,adv_acc,seconds"

    def final(self) -> CheckpointRow:
        return self.checkpoints[-1]

    def time_to_adv_acc(self, threshold: float) -> float | None:
        """Training seconds until adversarial accuracy first reached
        threshold, or None if it never did."""
        for row in self.checkpoints:
            if row.adv_acc >= threshold:
                return row.seconds
        return None


def build_pipeline(kind: str, net: netcore.Network, tau: float = 0.5) -> ModelPipeline:
    """natural / mat are the bare network; bin / bat prepend a threshold
    binarizer."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; known: {MODEL_KINDS}")
    stages = [ThresholdBinarizer(tau)] if kind in ("bin", "bat") else []
    return ModelPipeline(stages, net, name=kind)


def _sgd_step(net, pipe: ModelPipeline, batch_x, batch_y, lr: float, step: int):
    """Average the per-example gradients at the preprocessed inputs and take
    one descent step. Returns the mean batch loss."""
    accum = None
    total_loss = 0.0
    for x, y in zip(batch_x, batch_y):
        bundle = netcore.loss_and_gradients(net, pipe.preprocess(x), int(y))
        total_loss += bundle.loss
        if accum is None:
            accum = [(dw.copy(), db.copy()) for dw, db in bundle.param_grads]
        else:
            for (aw, ab), (dw, db) in zip(accum, bundle.param_grads):
                aw += dw
                ab += db
    n = len(batch_y)
    mean_loss = total_loss / n
    if not np.isfinite(mean_loss):
        raise NumericalError(f"training diverged (non-finite loss) at iteration {step}")
    for layer, (aw, ab) in zip(net.layers, accum):
        layer.weights -= lr * aw / n
        layer.bias -= lr * ab / n
        if not (np.isfinite(layer.weights).all() and np.isfinite(layer.bias).all()):
            raise NumericalError(
                f"training diverged (non-finite parameters) at iteration {step}"
            )
    return mean_loss


def _evaluate(pipe: ModelPipeline, eval_ds: Dataset, cfg: TrainConfig) -> tuple[float, float]:
    n = min(cfg.eval_size, len(eval_ds))
    sub = eval_ds.subset(range(n))
    clean = pipe.accuracy(sub.images, sub.labels)
    eval_attack = cfg.eval_attack or preset("trace")
    adv = attack_dataset(pipe, sub, eval_attack).adv_acc
    return clean, adv


def _train(
    net: netcore.Network,
    ds: Dataset,
    cfg: TrainConfig,
    preprocessing,
    adversarial: AttackConfig | None,
    eval_ds: Dataset | None,
) -> TrainingTrace:
    if eval_ds is None:
        # carve a held-out split off the end
        holdout = min(cfg.eval_size, max(1, len(ds) // 5))
        eval_ds = ds.subset(range(len(ds) - holdout, len(ds)))
        ds = ds.subset(range(len(ds) - holdout))
    stages = [preprocessing] if preprocessing is not None else []
    pipe = ModelPipeline(stages, net, name="training")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(ds))
    cursor = 0
    trace = TrainingTrace()
    train_seconds = 0.0
    for step in range(1, cfg.iterations + 1):
        if cursor + cfg.batch_size > len(ds):
            order = rng.permutation(len(ds))
            cursor = 0
        idx = order[cursor : cursor + cfg.batch_size]
        cursor += cfg.batch_size

        t0 = time.perf_counter()
        batch_x = [ds.images[i] for i in idx]
        batch_y = [int(ds.labels[i]) for i in idx]
        if adversarial is not None:
            batch_x = [
                pgd(
                    pipe,
                    x,
                    y,
                    replace(adversarial, seed=derive_seed(cfg.seed, step * 131071 + j)),
                ).adversarial_example
                for j, (x, y) in enumerate(zip(batch_x, batch_y))
            ]
        _sgd_step(net, pipe, batch_x, batch_y, cfg.learning_rate, step)
        train_seconds += time.perf_counter() - t0

        at_checkpoint = cfg.checkpoint_every and step % cfg.checkpoint_every == 0
        if at_checkpoint or step == cfg.iterations:
            clean, adv = _evaluate(pipe, eval_ds, cfg)
            trace.checkpoints.append(CheckpointRow(step, clean, adv, train_seconds))
    return trace


def train_natural(
    net: netcore.Network,
    ds: Dataset,
    cfg: TrainConfig,
    preprocessing=None,
    eval_ds: Dataset | None = None,
) -> TrainingTrace:
    """Plain minibatch gradient descent on clean data (binarized first when a
    preprocessing stage is given, as for the BIN model)."""
    return _train(net, ds, cfg, preprocessing, adversarial=None, eval_ds=eval_ds)


def train_adversarial(
    net: netcore.Network,
    ds: Dataset,
    cfg: TrainConfig,
    preprocessing=None,
    eval_ds: Dataset | None = None,
) -> TrainingTrace:
    """Min-max training: attack each batch with cfg.adversarial, descend on
    the perturbed batch."""
    if cfg.adversarial is None:
        raise ValueError("train_adversarial needs cfg.adversarial")
    return _train(net, ds, cfg, preprocessing, adversarial=cfg.adversarial, eval_ds=eval_ds)
