"""Training loop: shuffled batches, AdamW, clipping, scheduled sampling and early stopping."""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from src.data.windows import DatasetBundle, WindowSplit
from src.model import checkpoint
from src.model.config import ModelConfig
from src.model.genshin import ForwardResult, GEnSHIN, assemble_model
from src.tensor import Tensor, backward, no_grad
from src.training.losses import consistency_loss, contrastive_loss, task_loss, total_loss
from src.training.metrics import MetricReport, metrics
from src.training.optim import AdamW, clip_gradients
from src.utils.errors import NumericError


logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
LOSS_CURVE_FILE = "loss_curve.csv"


@dataclass
class LossParts:
    task: Tensor
    consistency: Tensor
    contrast: Tensor
    total: Tensor


def compute_loss(model: GEnSHIN, result: ForwardResult, target: np.ndarray) -> LossParts:
    """Task MAE on normalized targets plus the weighted memory terms."""
    weights = model.config.loss_weights
    task = task_loss(result.prediction, target)
    if result.readout is None:
        zero = Tensor(0.0)
        return LossParts(task=task, consistency=zero, contrast=zero, total=task)
    prototypes = model.memory.prototypes
    consistency = consistency_loss(result.readout, prototypes)
    contrast = contrastive_loss(result.readout, prototypes, weights.gamma)
    return LossParts(task, consistency, contrast, total_loss(task, consistency, contrast, weights))


def teacher_forcing_prob(epoch: int, epochs: int, decay_fraction: float) -> float:
    """Linear decay from 1 to 0 over the first ``decay_fraction`` of ``epochs``; ``epoch`` is 0-based."""
    span = decay_fraction * epochs
    if span <= 0:
        return 0.0
    return max(0.0, 1.0 - epoch / span)


class EvaluationResult(BaseModel):
    normalized_mae: Optional[float] = Field(None, description="Mean |prediction - target| in normalized units.")
    report: MetricReport = Field(description="Masked metrics in original units.")


def predict_split(model: GEnSHIN, split: WindowSplit, batch_size: int) -> tuple[np.ndarray, float]:
    """Normalized predictions for every window of ``split`` and their normalized MAE."""
    outputs = []
    abs_sum = 0.0
    count = 0
    with no_grad():
        for _, x, y, _ in split.iter_batches(batch_size):
            prediction = model.forward(x, train=False).prediction.data
            abs_sum += float(np.abs(prediction - y).sum())
            count += y.size
            outputs.append(prediction)
    if not outputs:
        return np.empty((0, split.horizon) + split.raw.shape[1:]), math.nan
    return np.concatenate(outputs, axis=0), abs_sum / count


def evaluate(model: GEnSHIN, split: WindowSplit, batch_size: int, null_value: float = 0.0) -> EvaluationResult:
    normalized, mae = predict_split(model, split, batch_size)
    if len(split) == 0:
        return EvaluationResult(normalized_mae=None, report=MetricReport())
    prediction = model.scaler.inverse_transform(normalized) if model.scaler is not None else normalized
    return EvaluationResult(normalized_mae=mae, report=metrics(prediction, split.y_raw, null_value))


class TrainReport(BaseModel):
    epochs_run: int = Field(0, description="Epochs completed.")
    best_epoch: int = Field(0, description="1-based epoch whose parameters were restored.")
    best_val_mae: Optional[float] = Field(None, description="Best early-stopping criterion value.")
    stopped_early: bool = Field(False, description="True when patience ran out before the epoch cap.")
    train_loss: list[float] = Field(default_factory=list, description="Mean total loss per epoch.")
    val_mae: list[float] = Field(default_factory=list, description="Early-stopping criterion per epoch.")
    tf_prob: list[float] = Field(default_factory=list, description="Teacher forcing probability per epoch.")
    test: Optional[EvaluationResult] = Field(None, description="Test metrics with the restored parameters.")


def write_loss_curve(report: TrainReport, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_mae"])
        for epoch, (train, val) in enumerate(zip(report.train_loss, report.val_mae), start=1):
            writer.writerow([epoch, repr(train), repr(val)])


def fit(
    config: ModelConfig,
    data: DatasetBundle,
    model: Optional[GEnSHIN] = None,
    checkpoint_dir: str | Path | None = None,
) -> TrainReport:
    """Train ``model`` (assembled from ``config`` when omitted) and restore its best parameters.

    With ``checkpoint_dir`` the restored model, the optimizer moments and the
    training counters are written there along with the report and loss curve.
    """
    if model is None:
        model = assemble_model(config, data.adjacency, data.scaler)
    rng = np.random.default_rng(config.seed)
    optimizer = AdamW(lr=config.lr, weight_decay=config.weight_decay)
    params = model.parameters()
    use_train_loss = len(data.val) == 0
    if use_train_loss:
        logger.warning("Validation split has no windows; early stopping follows the training task loss")

    report = TrainReport()
    best = math.inf
    since_improvement = 0
    best_state = model.state_dict()
    for epoch in range(config.epochs):
        tf_prob = teacher_forcing_prob(epoch, config.epochs, config.tf_decay_fraction)
        totals, tasks = [], []
        for batch_index, (_, x, y, _) in enumerate(data.train.iter_batches(config.batch_size, rng)):
            model.zero_grad()
            result = model.forward(x, train=True, teacher=y, tf_prob=tf_prob, rng=rng)
            parts = compute_loss(model, result, y)
            value = parts.total.item()
            if not math.isfinite(value):
                raise NumericError(
                    f"non-finite loss {value} in epoch {epoch + 1}, batch {batch_index}", batch_index=batch_index
                )
            backward(parts.total)
            clip_gradients(params, config.clip_norm)
            optimizer.step(model.named_parameters())
            totals.append(value)
            tasks.append(parts.task.item())

        train_loss = float(np.mean(totals))
        if use_train_loss:
            criterion = float(np.mean(tasks))
        else:
            criterion = predict_split(model, data.val, config.batch_size)[1]
        report.train_loss.append(train_loss)
        report.val_mae.append(criterion)
        report.tf_prob.append(tf_prob)
        report.epochs_run = epoch + 1

        if criterion < best:
            best = criterion
            since_improvement = 0
            best_state = model.state_dict()
            report.best_epoch = epoch + 1
            report.best_val_mae = criterion
        else:
            since_improvement += 1
        logger.info(
            "Epoch %d/%d: train loss %.6f, val MAE %.6f, tf %.3f%s",
            epoch + 1, config.epochs, train_loss, criterion, tf_prob,
            "" if since_improvement else " (best)",
        )
        if since_improvement >= config.patience:
            report.stopped_early = True
            logger.info("Early stopping after %d epochs without improvement", since_improvement)
            break

    model.load_state_dict(best_state)
    if len(data.test):
        report.test = evaluate(model, data.test, config.batch_size, config.null_value)
        logger.info("Test MAE %s (normalized %.6f)", report.test.report.mae, report.test.normalized_mae)

    if checkpoint_dir is not None:
        root = Path(checkpoint_dir)
        checkpoint.save(model, root)
        checkpoint.save_train_state(root, optimizer.state_arrays(), {
            "epoch": report.epochs_run,
            "best_epoch": report.best_epoch,
            "best_val_mae": report.best_val_mae,
            "epochs_since_improvement": since_improvement,
            "optimizer_step": optimizer.step_count,
            "rng_state": rng.bit_generator.state,
        })
        (root / REPORT_FILE).write_text(report.model_dump_json(indent=2), encoding="utf-8")
        write_loss_curve(report, root / LOSS_CURVE_FILE)
    return report
