"""End-to-end gradient check of the training objective and graph exports."""
import logging
from pathlib import Path

import numpy as np

from src.model.config import ModelConfig
from src.model.genshin import GEnSHIN
from src.tensor import no_grad
from src.tensor.gradcheck import GradCheckReport, grad_check
from src.tensor.serialization import write_tensor
from src.training.trainer import compute_loss


logger = logging.getLogger(__name__)

GRAPH_EXPORTS: tuple[str, ...] = ("a_real", "learned1", "learned2", "a1", "a2")


def check_model_gradients(
    config: ModelConfig,
    adjacency: np.ndarray | None = None,
    batch_size: int = 2,
    eps: float = 1e-5,
    tol: float = 1e-4,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare every parameter's gradient of the total loss with central differences.

    Runs in evaluation mode with teacher forcing off, so the objective is a
    deterministic function of the parameters.
    """
    rng = np.random.default_rng(seed)
    if adjacency is None:
        adjacency = np.eye(config.n_nodes) + (rng.random((config.n_nodes, config.n_nodes)) < 0.3)
    model = GEnSHIN(config, adjacency)
    x = rng.normal(size=(batch_size, config.window, config.n_nodes, config.in_channels))
    y = rng.normal(size=(batch_size, config.horizon, config.n_nodes, config.in_channels))
    named = list(model.named_parameters())
    names = [name for name, _ in named]
    params = [p for _, p in named]

    def objective(*_):
        return compute_loss(model, model.forward(x, train=False), y).total

    logger.info("Checking %d parameter tensors (%d scalars)", len(params), model.num_parameters())
    return grad_check(objective, params, eps=eps, tol=tol, names=names, max_entries=max_entries, seed=seed)


def _write_csv(path: Path, matrix: np.ndarray) -> None:
    np.savetxt(path, matrix, delimiter=",", fmt="%.17g")


def export_graphs(model: GEnSHIN, out_dir: str | Path) -> dict[str, Path]:
    """Write the real, learned and fused graphs as tensor binaries plus CSV."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    with no_grad():
        graphs = model.build_graphs()
    written = {}
    for name in GRAPH_EXPORTS:
        matrix = getattr(graphs, name).data
        write_tensor(root / f"{name}.bin", matrix)
        _write_csv(root / f"{name}.csv", matrix)
        written[name] = root / f"{name}.bin"
    logger.info("Wrote %d graphs to %s (alpha=%.6f)", len(written), root, graphs.alpha.item())
    return written


def write_matrix_csv(path: str | Path, matrix: np.ndarray) -> None:
    _write_csv(Path(path), np.atleast_2d(matrix))
