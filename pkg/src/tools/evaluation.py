import argparse
import csv
import logging
from pathlib import Path

import numpy as np

from src.data.windows import SPLIT_NAMES, DatasetBundle, WindowSplit, make_windows
from src.model import checkpoint
from src.model.genshin import GEnSHIN, predict
from src.tensor.serialization import write_tensor
from src.training.baselines import default_period, historical_average
from src.training.diagnostics import write_matrix_csv
from src.training.metrics import MetricReport, metrics, peak_metrics, target_times
from src.training.trainer import evaluate, predict_split
from src.tools.utils import (
    METRICS_FILE,
    check_shape,
    config_argument,
    data_argument,
    out_dir,
    read_dataset,
    resolve_config,
    write_manifest,
    write_text,
)
from src.utils.errors import DataError
from src.utils.run_config import UsageError, cli


logger = logging.getLogger(__name__)


def _split_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--split", choices=SPLIT_NAMES, default="test", help="Split to evaluate (default: test).")


def _peak_csv(reports: dict[str, MetricReport]) -> str:
    lines = ["period,mae,rmse,mape_pct,count"]
    for name, report in reports.items():
        values = ["" if v is None else repr(v) for v in (report.mae, report.rmse, report.mape)]
        lines.append(",".join([name, *values, str(report.count)]))
    return "\n".join(lines) + "\n"


def _report_peaks(out: Path, data: DatasetBundle, split: WindowSplit, prediction: np.ndarray, null_value: float) -> None:
    if data.timestamps is None or len(split) == 0:
        return
    times = target_times(data.timestamps, split.target_start, split.horizon)
    reports = peak_metrics(prediction, split.y_raw, times, null_value)
    write_text(out / "peak_metrics.csv", _peak_csv(reports))
    for name, report in reports.items():
        print(f"{name}: MAE {report.mae} RMSE {report.rmse} MAPE {report.mape} ({report.count} entries)")


def _eval_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--checkpoint", required=True, type=Path, help="Checkpoint directory written by train.")
    config_argument(parser, required=False)
    data_argument(parser)
    _split_argument(parser)
    parser.add_argument("--dump-attn", action="store_true", help="Write Transformer attention of the first batch.")
    parser.add_argument("--dump-attn-mem", action="store_true", help="Write memory attention of the first batch as CSV.")
    parser.add_argument("--dump-dyn-graph", action="store_true", help="Write the decoder graph of every step.")
    parser.add_argument("--dump-pred", action="store_true", help="Write predictions against targets as CSV.")
    parser.add_argument("--first-n", type=int, default=10, help="Nodes included in CSV dumps (default: 10).")
    parser.add_argument("--batch-size", type=int, default=None, help="Evaluation batch size (default: config).")


def _dump_diagnostics(out: Path, model: GEnSHIN, split: WindowSplit, args: argparse.Namespace, batch_size: int) -> None:
    if not (args.dump_attn or args.dump_attn_mem or args.dump_dyn_graph) or len(split) == 0:
        return
    x, _, _ = split.batch(np.arange(min(batch_size, len(split))))
    result = predict(model, x, normalized=True, diagnostics=True)
    first_n = max(args.first_n, 0)

    if args.dump_attn:
        if result.attention:
            root = out / "attn"
            root.mkdir(exist_ok=True)
            for layer, weights in enumerate(result.attention):
                write_tensor(root / f"layer{layer}.bin", weights)
            logger.info("Wrote %d attention layers to %s", len(result.attention), root)
        else:
            logger.warning("Model has no Transformer; --dump-attn writes nothing")
    if args.dump_attn_mem:
        if result.memory_scores is not None:
            scores = result.memory_scores[0, :first_n]
            write_tensor(out / "attn_mem.bin", result.memory_scores)
            header = "node," + ",".join(f"prototype{k}" for k in range(scores.shape[1]))
            rows = np.column_stack([np.arange(scores.shape[0]), scores])
            np.savetxt(out / "attn_mem.csv", rows, delimiter=",", header=header, comments="", fmt="%.17g")
        else:
            logger.warning("Model has no memory bank; --dump-attn-mem writes nothing")
    if args.dump_dyn_graph:
        root = out / "dyn_graph"
        root.mkdir(exist_ok=True)
        for step, graph in enumerate(result.dynamic_graphs or [], start=1):
            write_tensor(root / f"step{step}.bin", graph)
            write_matrix_csv(root / f"step{step}.csv", graph)


def _dump_predictions(
    out: Path, data: DatasetBundle, split: WindowSplit, prediction: np.ndarray, first_n: int
) -> None:
    truth = split.y_raw
    nodes = min(max(first_n, 0), truth.shape[2])
    times = target_times(data.timestamps, split.target_start, split.horizon) if data.timestamps is not None else None
    with (out / "predictions.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["window", "horizon", "node", "timestamp", "y_true", "y_pred"])
        for w in range(truth.shape[0]):
            for h in range(truth.shape[1]):
                stamp = "" if times is None else int(times[w, h])
                for node in range(nodes):
                    writer.writerow([w, h + 1, node, stamp, repr(float(truth[w, h, node, 0])), repr(float(prediction[w, h, node, 0]))])


@cli.command("eval", help="Evaluate a checkpoint on a split and optionally dump diagnostics.", arguments=_eval_arguments)
def evaluate_checkpoint(args: argparse.Namespace) -> int:
    expected = resolve_config(args) if args.config is not None else None
    model = checkpoint.load(args.checkpoint, expected=expected)
    config = model.config
    out = out_dir(args)
    write_manifest(out, args, config)
    raw = read_dataset(args.data)
    check_shape(config, raw)
    data = make_windows(raw, config.window, config.horizon, config.ratios)
    split = data.split(args.split)
    if len(split) == 0:
        raise DataError(f"{args.data}: the {args.split} split has no windows")
    batch_size = args.batch_size or config.batch_size

    result = evaluate(model, split, batch_size, config.null_value)
    write_text(out / METRICS_FILE, result.report.to_csv())
    print(result.report.to_table(title=f"{args.split} metrics"))

    normalized, _ = predict_split(model, split, batch_size)
    prediction = model.scaler.inverse_transform(normalized) if model.scaler is not None else normalized
    _report_peaks(out, data, split, prediction, config.null_value)
    _dump_diagnostics(out, model, split, args, batch_size)
    if args.dump_pred:
        _dump_predictions(out, data, split, prediction, args.first_n)
    return 0


def _ha_arguments(parser: argparse.ArgumentParser) -> None:
    config_argument(parser)
    data_argument(parser)
    _split_argument(parser)
    parser.add_argument("--period", type=int, default=None, help="Slots per period (default: ha_period or derived).")


@cli.command("baseline-ha", help="Score the historical-average baseline on the same split as the model.", arguments=_ha_arguments)
def baseline_ha(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = out_dir(args)
    write_manifest(out, args, config)
    raw = read_dataset(args.data)
    check_shape(config, raw)
    data = make_windows(raw, config.window, config.horizon, config.ratios)
    split = data.split(args.split)
    period = args.period or config.ha_period or default_period(data.interval_minutes, data.timestamps is not None)
    if period < 1:
        raise UsageError(f"--period must be positive, got {period}")
    logger.info("Historical average with a period of %d steps", period)

    prediction = historical_average(data.train.raw, split.target_start, split.horizon, period)
    report = metrics(prediction, split.y_raw, config.null_value)
    write_text(out / METRICS_FILE, report.to_csv())
    print(report.to_table(title=f"HA {args.split} metrics (period {period})"))
    _report_peaks(out, data, split, prediction, config.null_value)
    return 0
