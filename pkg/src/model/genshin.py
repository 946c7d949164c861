"""The forecasting model: Y = F(X, A).

Graph learning builds the fused graphs and their supports, the encoder turns
the input window into H_t, the memory bank retrieves H_mem, and the decoder
rolls out ``horizon`` frames. Forward passes keep no state on the model, so a
loaded model can serve predictions from several threads.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.data.windows import Scaler
from src.model.config import ModelConfig
from src.model.decoder import Decoder, GraphUpdater
from src.model.encoder import Encoding, STEncoder
from src.model.graphs import GraphLearner, GraphSet, normalize_adjacency
from src.model.memory import MemoryBank, MemoryReadout
from src.model.module import Module
from src.model.transformer import TemporalTransformer
from src.tensor import Tensor, as_tensor, no_grad
from src.utils.errors import ShapeError


logger = logging.getLogger(__name__)


@dataclass
class ForwardResult:
    prediction: Tensor  # B x tau x N x C, normalized units
    graphs: GraphSet
    encoding: Encoding
    readout: Optional[MemoryReadout]
    dynamic_graphs: list[np.ndarray] = field(default_factory=list)


@dataclass
class Prediction:
    values: np.ndarray  # B x tau x N x C, original units
    memory_scores: Optional[np.ndarray] = None
    dynamic_graphs: Optional[list[np.ndarray]] = None
    attention: Optional[list[np.ndarray]] = None


class GEnSHIN(Module):
    def __init__(self, config: ModelConfig, adjacency: np.ndarray, scaler: Optional[Scaler] = None) -> None:
        adjacency = np.asarray(adjacency, dtype=np.float64)
        if adjacency.shape != (config.n_nodes, config.n_nodes):
            raise ShapeError(
                f"adjacency {adjacency.shape} does not match n_nodes={config.n_nodes} of the config"
            )
        self.config = config
        self.a_real = normalize_adjacency(adjacency)
        self.scaler = scaler
        rng = np.random.default_rng(config.seed)
        h = config.hidden_dim

        self.memory = None if config.no_memory else MemoryBank(config.n_prototypes, config.proto_dim, h, rng)
        self.graph_learner = GraphLearner(
            config.n_nodes,
            config.n_prototypes,
            config.proto_dim,
            rng,
            use_memory=not config.no_memory,
            single_embed=config.single_embed,
            no_real_graph=config.no_real_graph,
        )
        transformer = None
        if not config.no_transformer:
            transformer = TemporalTransformer(
                h, config.n_heads, config.feedforward_dim, config.transformer_layers, config.window, rng, config.dropout
            )
        self.encoder = STEncoder(
            config.in_channels, h, config.gcru_layers, 2 * (config.cheb_order + 1), rng, transformer
        )
        memory_dim = 0 if config.no_memory else config.proto_dim
        updater = None
        if not config.static_graph:
            updater = GraphUpdater(h + memory_dim, config.updater_hidden, config.updater_dim, config.updater_step, rng)
        self.decoder = Decoder(
            config.in_channels, h, config.gcru_layers, config.cheb_order, rng, memory_dim=memory_dim, updater=updater
        )

    def build_graphs(self, a_real: Optional[np.ndarray] = None) -> GraphSet:
        prototypes = self.memory.prototypes if self.memory is not None else None
        return self.graph_learner.build(prototypes, self.a_real if a_real is None else a_real, self.config.cheb_order)

    def forward(
        self,
        x: np.ndarray | Tensor,
        train: bool = False,
        teacher: Optional[np.ndarray] = None,
        tf_prob: float = 0.0,
        rng: Optional[np.random.Generator] = None,
        a_real: Optional[np.ndarray] = None,
        keep_graphs: bool = False,
    ) -> ForwardResult:
        """Normalized B x T x N x C inputs to normalized B x tau x N x C predictions."""
        x = as_tensor(x)
        config = self.config
        if x.ndim != 4:
            raise ShapeError(f"forward: expected B x T x N x C input, got {x.shape}")
        if x.shape[2] != config.n_nodes:
            raise ShapeError(f"forward: input has {x.shape[2]} nodes, model was built for {config.n_nodes}")
        if x.shape[3] != config.in_channels:
            raise ShapeError(f"forward: input has {x.shape[3]} channels, model expects {config.in_channels}")

        graphs = self.build_graphs(a_real)
        encoding = self.encoder(x, graphs.encoder_supports, train, rng)
        readout = self.memory.query(encoding.final) if self.memory is not None else None
        decoding = self.decoder(
            encoding.final,
            readout.retrieved if readout is not None else None,
            graphs.a1,
            config.horizon,
            teacher=teacher,
            tf_prob=tf_prob,
            rng=rng,
            keep_graphs=keep_graphs,
        )
        return ForwardResult(
            prediction=decoding.prediction,
            graphs=graphs,
            encoding=encoding,
            readout=readout,
            dynamic_graphs=decoding.graphs,
        )

    __call__ = forward


def assemble_model(config: ModelConfig, adjacency: np.ndarray, scaler: Optional[Scaler] = None) -> GEnSHIN:
    model = GEnSHIN(config, adjacency, scaler)
    enabled = [flag for flag, on in config.ablations().items() if on]
    logger.info(
        "Assembled model: %d parameters, N=%d, H=%d, ablations=%s",
        model.num_parameters(), config.n_nodes, config.hidden_dim, enabled or "none",
    )
    return model


def predict(
    model: GEnSHIN,
    x: np.ndarray,
    a_real: Optional[np.ndarray] = None,
    normalized: bool = False,
    diagnostics: bool = False,
) -> Prediction:
    """Evaluation-mode forecast in original units.

    ``x`` is raw unless ``normalized`` is set; a supplied ``a_real`` replaces
    the stored real graph for this call only.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[2] != model.config.n_nodes:
        raise ShapeError(f"predict: input {x.shape} does not match a model of {model.config.n_nodes} nodes")
    scaler = model.scaler
    if not normalized and scaler is not None:
        x = scaler.transform(x)
    if a_real is not None:
        a_real = normalize_adjacency(a_real)
        if a_real.shape != model.a_real.shape:
            raise ShapeError(f"predict: adjacency {a_real.shape} against {model.a_real.shape} of the model")
    with no_grad():
        result = model.forward(x, train=False, a_real=a_real, keep_graphs=diagnostics)
    values = result.prediction.data
    if scaler is not None:
        values = scaler.inverse_transform(values)
    if not diagnostics:
        return Prediction(values=values)
    return Prediction(
        values=values,
        memory_scores=result.readout.scores.data.copy() if result.readout is not None else None,
        dynamic_graphs=result.dynamic_graphs,
        attention=result.encoding.attention,
    )
