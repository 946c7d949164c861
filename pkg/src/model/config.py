"""Model and training hyperparameters, with flat ``key=value`` config files.

Defaults are the full-scale METR-LA setup; ``configs/toy.cfg`` holds the
desk-scale preset used by the tests.
"""
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.training.losses import LossWeights
from src.utils.errors import ConfigError


ABLATION_FLAGS: tuple[str, ...] = ("no_transformer", "single_embed", "no_memory", "static_graph", "no_real_graph")


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    # data shape
    n_nodes: int = Field(207, ge=1, description="Number of graph nodes N.")
    in_channels: int = Field(1, ge=1, description="Feature channels C per node.")
    window: int = Field(12, ge=1, description="Input steps T.")
    horizon: int = Field(12, ge=1, description="Predicted steps tau.")

    # encoder
    hidden_dim: int = Field(128, ge=1, description="GCRU hidden width H.")
    gcru_layers: int = Field(5, ge=1, description="Stacked GCRU layers in encoder and decoder.")
    cheb_order: int = Field(3, ge=1, description="Highest Chebyshev polynomial order.")
    transformer_layers: int = Field(2, ge=1, description="Temporal Transformer blocks.")
    n_heads: int = Field(4, ge=1, description="Attention heads per Transformer block.")
    ff_dim: Optional[int] = Field(None, ge=1, description="Feed-forward width; 4 * hidden_dim when unset.")
    dropout: float = Field(0.0, ge=0.0, lt=1.0, description="Transformer dropout rate.")

    # memory bank
    n_prototypes: int = Field(20, ge=2, description="Pattern prototypes K.")
    proto_dim: int = Field(64, ge=1, description="Prototype width d_m.")

    # dynamic graph updater
    updater_hidden: int = Field(128, ge=1, description="Updater MLP hidden width U.")
    updater_dim: int = Field(16, ge=1, description="Source/target factor width d_g.")
    updater_step: float = Field(0.1, gt=0.0, description="Update scale eta_g.")

    # objective
    lambda_consistency: float = Field(0.01, ge=0.0, description="Consistency loss weight lambda1.")
    lambda_contrast: float = Field(0.01, ge=0.0, description="Contrastive loss weight lambda2.")
    margin: float = Field(1.0, gt=0.0, description="Contrastive margin gamma.")

    # optimisation
    lr: float = Field(1e-3, gt=0.0, description="AdamW learning rate.")
    weight_decay: float = Field(1e-4, ge=0.0, description="Decoupled weight decay.")
    batch_size: int = Field(64, ge=1, description="Windows per batch.")
    epochs: int = Field(100, ge=1, description="Epoch cap.")
    patience: int = Field(20, ge=1, description="Early stopping patience in epochs.")
    clip_norm: float = Field(5.0, gt=0.0, description="Global gradient norm limit.")
    tf_decay_fraction: float = Field(
        0.5, ge=0.0, le=1.0, description="Share of the epoch cap over which teacher forcing decays to 0."
    )

    # data handling
    train_ratio: float = Field(0.7, ge=0.0, le=1.0, description="Training share of the raw series.")
    val_ratio: float = Field(0.1, ge=0.0, le=1.0, description="Validation share of the raw series.")
    test_ratio: float = Field(0.2, ge=0.0, le=1.0, description="Test share of the raw series.")
    null_value: float = Field(0.0, description="Target value excluded from metrics.")
    ha_period: Optional[int] = Field(
        None, ge=1, description="Historical-average period in steps; one week with timestamps, else one day."
    )

    # ablations
    no_transformer: bool = Field(False, description="Use the last GCRU state as the encoding.")
    single_embed: bool = Field(False, description="Tie the second association matrix to the first.")
    no_memory: bool = Field(False, description="Drop the memory bank; graph embeddings become free parameters.")
    static_graph: bool = Field(False, description="Freeze the decoder graph at the fused encoder graph.")
    no_real_graph: bool = Field(False, description="Force the fusion weight to 0.")

    seed: int = Field(0, ge=0, description="Seed for initialisation, shuffling and sampling.")

    @model_validator(mode="after")
    def _consistent(self) -> "ModelConfig":
        if self.hidden_dim % self.n_heads:
            raise ValueError(f"hidden_dim {self.hidden_dim} is not divisible by n_heads {self.n_heads}")
        if self.no_memory and (self.lambda_consistency or self.lambda_contrast):
            raise ValueError("no_memory disables the memory bank, so lambda_consistency and lambda_contrast must be 0")
        total = self.train_ratio + self.val_ratio + self.test_ratio
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {total}")
        return self

    @property
    def feedforward_dim(self) -> int:
        return self.ff_dim or 4 * self.hidden_dim

    @property
    def ratios(self) -> tuple[float, float, float]:
        return self.train_ratio, self.val_ratio, self.test_ratio

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(lambda1=self.lambda_consistency, lambda2=self.lambda_contrast, gamma=self.margin)

    def ablations(self) -> dict[str, bool]:
        return {flag: getattr(self, flag) for flag in ABLATION_FLAGS}

    def with_overrides(self, **overrides: Any) -> "ModelConfig":
        """A validated copy with ``overrides`` applied."""
        try:
            return ModelConfig(**{**self.model_dump(), **overrides})
        except ValidationError as exc:
            raise ConfigError(_describe(exc)) from None


def _describe(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        where = ".".join(str(p) for p in error["loc"])
        parts.append(f"{where}: {error['msg']}" if where else error["msg"])
    return "; ".join(parts)


def _coerce(raw: str) -> Any:
    lowered = raw.lower()
    if lowered in ("none", "null", ""):
        return None
    return raw


def parse_config(text: str, source: str = "<config>", **overrides: Any) -> ModelConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {content!r}")
        key, raw = (part.strip() for part in content.split("=", 1))
        if key not in ModelConfig.model_fields:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        values[key] = _coerce(raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ModelConfig(**values)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_describe(exc)}") from None


def load_config(path: str | Path, **overrides: Any) -> ModelConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: unreadable ({exc.strerror})") from exc
    return parse_config(text, source=str(path), **overrides)


def dump_config(config: ModelConfig) -> str:
    """Canonical key=value text in field declaration order; parses back to an equal config."""
    lines = []
    for name in ModelConfig.model_fields:
        value = getattr(config, name)
        if value is None:
            text = "none"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{name} = {text}")
    return "\n".join(lines) + "\n"


def save_config(config: ModelConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(config), encoding="utf-8")
    return path
