import argparse

from src.model.config import save_config
from src.training.ablation import ablation_csv, ablation_table, run_ablation
from src.training.trainer import fit
from src.tools.utils import (
    METRICS_FILE,
    config_argument,
    data_argument,
    load_bundle,
    out_dir,
    resolve_config,
    write_manifest,
    write_text,
)
from src.utils.run_config import cli


CHECKPOINT_DIR = "checkpoint"


def _train_arguments(parser: argparse.ArgumentParser) -> None:
    config_argument(parser)
    data_argument(parser)


@cli.command("train", help="Train a model and write its checkpoint, loss curve and test metrics.", arguments=_train_arguments)
def train(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = out_dir(args)
    write_manifest(out, args, config)
    data = load_bundle(config, args.data)
    save_config(config, out / "config.cfg")
    report = fit(config, data, checkpoint_dir=out / CHECKPOINT_DIR)
    if report.test is not None:
        write_text(out / METRICS_FILE, report.test.report.to_csv())
        print(report.test.report.to_table(title="Test metrics"))
    print(f"best epoch {report.best_epoch} of {report.epochs_run}, validation MAE {report.best_val_mae}")
    return 0


@cli.command("ablate", help="Train the full model and each single-component ablation; print a comparison table.", arguments=_train_arguments)
def ablate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = out_dir(args)
    write_manifest(out, args, config)
    data = load_bundle(config, args.data)
    rows = run_ablation(config, data)
    write_text(out / "ablation.csv", ablation_csv(rows))
    print(ablation_table(rows))
    return 0
