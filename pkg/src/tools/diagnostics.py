import argparse
from pathlib import Path

from src.model import checkpoint
from src.tensor.gradcheck import check_primitives
from src.training.diagnostics import check_model_gradients, export_graphs
from src.tools.utils import config_argument, out_dir, resolve_config, write_manifest, write_text
from src.utils.errors import NumericError
from src.utils.run_config import UsageError, cli


def _gradcheck_arguments(parser: argparse.ArgumentParser) -> None:
    config_argument(parser)
    parser.add_argument("--tol", type=float, default=1e-4, help="Largest accepted relative error (default: 1e-4).")
    parser.add_argument("--eps", type=float, default=1e-5, help="Finite-difference step (default: 1e-5).")
    parser.add_argument(
        "--max-entries", type=int, default=0, help="Sampled entries per parameter of the model check; 0 checks all."
    )
    parser.add_argument("--skip-primitives", action="store_true", help="Only check the end-to-end objective.")


@cli.command("gradcheck", help="Check reverse-mode gradients of every primitive and of the training objective.", arguments=_gradcheck_arguments)
def gradcheck(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = out_dir(args)
    write_manifest(out, args, config)
    if args.max_entries < 0:
        raise UsageError(f"--max-entries must be nonnegative, got {args.max_entries}")

    sections = []
    failures = []
    if not args.skip_primitives:
        primitives = check_primitives(eps=args.eps, tol=args.tol, seed=config.seed)
        sections.append(("primitives", primitives))
    model = check_model_gradients(
        config, eps=args.eps, tol=args.tol, max_entries=args.max_entries or None, seed=config.seed
    )
    sections.append(("model", model))

    lines = []
    for title, report in sections:
        lines.append(f"[{title}] max relative error {report.max_rel_error:.3e} (tol {args.tol:g})")
        lines.append(report.to_table())
        failures.extend(entry.name for entry in report.failures)
    text = "\n".join(lines)
    write_text(out / "gradcheck.txt", text + "\n")
    print(text)
    if failures:
        raise NumericError(f"gradient check failed for {', '.join(failures)}")
    return 0


def _dump_graphs_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--checkpoint", required=True, type=Path, help="Checkpoint directory written by train.")


@cli.command("dump-graphs", help="Write the real, learned and fused graphs of a checkpoint.", arguments=_dump_graphs_arguments)
def dump_graphs(args: argparse.Namespace) -> int:
    model = checkpoint.load(args.checkpoint)
    out = out_dir(args)
    write_manifest(out, args, model.config)
    written = export_graphs(model, out)
    for name, path in written.items():
        print(f"{name}: {path}")
    return 0
