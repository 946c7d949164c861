"""Desk-scale synthetic traffic: phased sinusoids coupled through a planted directed graph.

Node j's series is

    x_j(t) = base + amplitude * sin(2*pi*(t mod period)/period + phase_j)
             + noise_j(t) + sum over planted edges i->j of weight * x_i(t - lag)

evaluated in topological order of the planted graph, which must be acyclic.
The series is generated over a warm-up prefix long enough for every lagged
chain to reach back into real history, then cropped, so a noiseless series is
exactly periodic.
"""
import logging
from graphlib import CycleError, TopologicalSorter
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from src.data.datasets import RawDataset
from src.utils.errors import ConfigError


logger = logging.getLogger(__name__)

# 2012-03-01T00:00:00Z, the first day of the METR-LA recording window.
DEFAULT_START_EPOCH = 1330560000


class PlantedEdge(BaseModel):
    source: int = Field(ge=0, description="Node whose past drives the target.")
    target: int = Field(ge=0, description="Node receiving the lagged influence.")
    lag: int = Field(ge=1, description="Delay in steps.")
    weight: float = Field(0.5, gt=0, description="Coupling strength.")


class SyntheticPattern(BaseModel):
    period: int = Field(288, ge=2, description="Steps per cycle (288 is one day at 5 minutes).")
    base: float = Field(60.0, description="Mean level of every node.")
    amplitude: float = Field(10.0, ge=0, description="Sinusoid amplitude.")
    noise_std: float = Field(0.0, ge=0, description="Standard deviation of Gaussian innovations.")
    edges: Optional[list[PlantedEdge]] = Field(
        None, description="Planted directed edges; a random DAG over all nodes when omitted."
    )
    interval_minutes: int = Field(5, ge=1, description="Minutes between steps.")
    start_epoch: int = Field(DEFAULT_START_EPOCH, description="Epoch seconds of step 0.")

    @field_validator("edges")
    def _no_self_edges(cls, v: Optional[list[PlantedEdge]]) -> Optional[list[PlantedEdge]]:
        if v is not None and any(e.source == e.target for e in v):
            raise ValueError("planted edges must connect distinct nodes")
        return v


def default_edges(n_nodes: int, rng: np.random.Generator) -> list[PlantedEdge]:
    """One edge into every node j > 0 from a random earlier node, lag in [1, 3]."""
    edges = []
    for target in range(1, n_nodes):
        source = int(rng.integers(0, target))
        lag = int(rng.integers(1, 4))
        edges.append(PlantedEdge(source=source, target=target, lag=lag, weight=0.5))
    return edges


def planted_adjacency(n_nodes: int, edges: list[PlantedEdge]) -> np.ndarray:
    """Receiving-row adjacency: edge i->j sets ``adj[j, i]``; self-loops on the diagonal."""
    adjacency = np.eye(n_nodes)
    for edge in edges:
        adjacency[edge.target, edge.source] = edge.weight
    return adjacency


def _topological_order(n_nodes: int, edges: list[PlantedEdge]) -> list[int]:
    sorter = TopologicalSorter({node: set() for node in range(n_nodes)})
    for edge in edges:
        sorter.add(edge.target, edge.source)
    try:
        return list(sorter.static_order())
    except CycleError as exc:
        raise ConfigError(f"planted edges contain a cycle through nodes {exc.args[1]}") from None


def generate_synthetic(
    n_nodes: int,
    t_total: int,
    pattern: SyntheticPattern | None = None,
    seed: int = 0,
) -> RawDataset:
    if n_nodes < 2:
        raise ConfigError(f"synthetic data needs at least 2 nodes, got {n_nodes}")
    if t_total < 1:
        raise ConfigError(f"t_total must be positive, got {t_total}")
    pattern = pattern or SyntheticPattern()
    rng = np.random.default_rng(seed)
    edges = pattern.edges if pattern.edges is not None else default_edges(n_nodes, rng)
    for edge in edges:
        if edge.source >= n_nodes or edge.target >= n_nodes:
            raise ConfigError(f"edge {edge.source}->{edge.target} references a node outside 0..{n_nodes - 1}")
    order = _topological_order(n_nodes, edges)

    max_lag = max((e.lag for e in edges), default=0)
    pad = max_lag * n_nodes
    steps = np.arange(-pad, t_total)
    slot = np.mod(steps, pattern.period)
    phases = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    periodic = pattern.base + pattern.amplitude * np.sin(
        2.0 * np.pi * slot[:, None] / pattern.period + phases[None, :]
    )
    noise = rng.normal(0.0, pattern.noise_std, size=periodic.shape) if pattern.noise_std > 0 else None

    incoming: dict[int, list[PlantedEdge]] = {node: [] for node in range(n_nodes)}
    for edge in edges:
        incoming[edge.target].append(edge)

    series = np.zeros_like(periodic)
    for node in order:
        column = periodic[:, node].copy()
        if noise is not None:
            column += noise[:, node]
        for edge in incoming[node]:
            column[edge.lag:] += edge.weight * series[:-edge.lag, edge.source]
        series[:, node] = column
    values = series[pad:, :, None]

    timestamps = pattern.start_epoch + np.arange(t_total, dtype=np.int64) * pattern.interval_minutes * 60
    logger.info(
        "Generated %d nodes x %d steps, period %d, %d planted edges, noise %.3g",
        n_nodes, t_total, pattern.period, len(edges), pattern.noise_std,
    )
    return RawDataset(
        values=values,
        adjacency=planted_adjacency(n_nodes, edges),
        interval_minutes=pattern.interval_minutes,
        timestamps=timestamps,
    )
