"""
Run configuration and environment-resolved paths.

Environment:
- BSDA_DATA_DIR   dataset directory (default ./data)
- BSDA_RUNS_DIR   training/eval output root (default ./runs)
- BSDA_LOG_LEVEL  logging level name (default INFO)
- BSDA_DEBUG      NaN/Inf check after every autodiff op (read by src.autodiff.tensor)
"""

import json
import logging
import os
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigInvalid
from .model.models import Ablation, BsdaConfig
from .synth import SynthConfig

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def get_data_dir() -> Path:
    configured = os.environ.get("BSDA_DATA_DIR")
    if configured:
        return Path(configured).expanduser().resolve()
    return Path("data").resolve()


def get_runs_dir() -> Path:
    configured = os.environ.get("BSDA_RUNS_DIR")
    if configured:
        return Path(configured).expanduser().resolve()
    return Path("runs").resolve()


def configure_logging(level: str | None = None) -> None:
    name = (level or os.environ.get("BSDA_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, name, logging.INFO), format=LOG_FORMAT)


class RunConfig(BaseModel):
    """One JSON document per run; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    model: BsdaConfig = Field(default_factory=BsdaConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    data_dir: Path | None = None
    out_dir: Path | None = None
    ablation: Ablation | None = Field(default=None, description="Overrides model.ablation when set")

    def resolved_model(self, ablation: Ablation | None = None, seed: int | None = None) -> BsdaConfig:
        """Model config with CLI overrides applied, re-validated."""
        updates = {}
        chosen = ablation or self.ablation
        if chosen is not None:
            updates["ablation"] = chosen
        if seed is not None:
            updates["seed"] = seed
        try:
            return BsdaConfig.model_validate({**self.model.model_dump(), **updates})
        except ValidationError as e:
            raise ConfigInvalid(str(e)) from e

    def resolved_data_dir(self) -> Path:
        return Path(self.data_dir) if self.data_dir else get_data_dir()

    def resolved_out_dir(self) -> Path:
        return Path(self.out_dir) if self.out_dir else get_runs_dir()


def load_run_config(path: Path | None) -> RunConfig:
    """Parse and validate a RunConfig; None yields the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigInvalid(f"Cannot read config {path}: {e}") from e
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigInvalid(f"{path}: {e}") from e
