"""Ablation sweep: the full model and one variant per disabled component, trained under one seed."""
import logging
from typing import Any, Optional

from pydantic import BaseModel, Field

from src.data.windows import DatasetBundle
from src.model.config import ModelConfig
from src.model.genshin import assemble_model
from src.training.trainer import fit
from src.utils.errors import GenshinError


logger = logging.getLogger(__name__)

FULL_MODEL = "Whole Model"

VARIANTS: tuple[tuple[str, dict[str, Any]], ...] = (
    (FULL_MODEL, {}),
    ("w/o Transformer", {"no_transformer": True}),
    ("w/o Dual Embed", {"single_embed": True}),
    ("w/o Memory", {"no_memory": True, "lambda_consistency": 0.0, "lambda_contrast": 0.0}),
    ("w/o Dynamic Graph", {"static_graph": True}),
    ("w/o Real Graph", {"no_real_graph": True}),
)


class AblationRow(BaseModel):
    variant: str = Field(description="Variant name.")
    mae: Optional[float] = Field(None, description="Test MAE, original units.")
    rmse: Optional[float] = Field(None, description="Test RMSE, original units.")
    mape: Optional[float] = Field(None, description="Test MAPE in percent.")
    parameters: int = Field(0, description="Trainable scalar count.")
    error: Optional[str] = Field(None, description="Failure message when the variant did not finish.")


def variant_config(base: ModelConfig, overrides: dict[str, Any]) -> ModelConfig:
    # variants switch on exactly one component off the full model
    cleared = {flag: False for flag in base.ablations()}
    return base.with_overrides(**{**cleared, **overrides})


def run_ablation(config: ModelConfig, data: DatasetBundle) -> list[AblationRow]:
    """Train every variant in order; a failing variant is recorded and the sweep moves on."""
    rows = []
    for name, overrides in VARIANTS:
        logger.info("Ablation variant '%s'", name)
        try:
            variant = variant_config(config, overrides)
            model = assemble_model(variant, data.adjacency, data.scaler)
            report = fit(variant, data, model=model)
        except GenshinError as exc:
            logger.error("Variant '%s' failed: %s", name, exc)
            rows.append(AblationRow(variant=name, error=str(exc)))
            continue
        test = report.test.report if report.test is not None else None
        rows.append(AblationRow(
            variant=name,
            mae=test.mae if test else None,
            rmse=test.rmse if test else None,
            mape=test.mape if test else None,
            parameters=model.num_parameters(),
        ))
    return rows


def _cell(value: Optional[float]) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def ablation_table(rows: list[AblationRow]) -> str:
    lines = [f"{'variant':<20}  {'MAE':>10}  {'RMSE':>10}  {'MAPE%':>10}"]
    for row in rows:
        if row.error is not None:
            lines.append(f"{row.variant:<20}  failed: {row.error}")
        else:
            lines.append(f"{row.variant:<20}  {_cell(row.mae):>10}  {_cell(row.rmse):>10}  {_cell(row.mape):>10}")
    return "\n".join(lines)


def ablation_csv(rows: list[AblationRow]) -> str:
    lines = ["variant,mae,rmse,mape_pct,parameters,error"]
    for row in rows:
        values = ["" if v is None else repr(v) for v in (row.mae, row.rmse, row.mape)]
        error = (row.error or "").replace(",", ";").replace("\n", " ")
        lines.append(",".join([row.variant, *values, str(row.parameters), error]))
    return "\n".join(lines) + "\n"
