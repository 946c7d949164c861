import argparse
import json
from pathlib import Path

from src.data.datasets import convert_csv, describe, save_dataset
from src.data.synthetic import SyntheticPattern, generate_synthetic
from src.tools.utils import out_dir, write_manifest
from src.utils.run_config import UsageError, cli


def _synth_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--nodes", type=int, default=8, help="Number of nodes (default: 8).")
    parser.add_argument("--steps", type=int, default=2016, help="Series length in steps (default: one week at 5 min).")
    parser.add_argument("--period", type=int, default=288, help="Steps per sinusoid period (default: 288).")
    parser.add_argument("--noise", type=float, default=0.0, help="Gaussian noise standard deviation (default: 0).")
    parser.add_argument("--interval", type=int, default=5, help="Minutes between steps (default: 5).")


@cli.command("synth", help="Generate a periodic synthetic dataset with planted directed lag effects.", arguments=_synth_arguments)
def synth(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 0
    out = out_dir(args)
    pattern = SyntheticPattern(period=args.period, noise_std=args.noise, interval_minutes=args.interval)
    dataset = generate_synthetic(args.nodes, args.steps, pattern, seed=seed)
    save_dataset(dataset, out)
    write_manifest(out, args, seed=seed)
    print(json.dumps(describe(dataset), indent=2))
    return 0


def _convert_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--csv", required=True, type=Path, help="CSV with a timestamp column and one column per node.")
    parser.add_argument("--adjacency", type=Path, default=None, help="N x N adjacency CSV (default: identity).")
    parser.add_argument("--interval", type=int, default=None, help="Minutes between steps (default: from timestamps).")


@cli.command("convert", help="Convert a CSV time series into the dataset directory layout.", arguments=_convert_arguments)
def convert(args: argparse.Namespace) -> int:
    if not args.csv.is_file():
        raise UsageError(f"--csv {args.csv}: no such file")
    out = out_dir(args)
    dataset = convert_csv(args.csv, out, adjacency_path=args.adjacency, interval_minutes=args.interval)
    write_manifest(out, args, seed=args.seed)
    print(json.dumps(describe(dataset), indent=2))
    return 0
