"""Checkpoints: BSDC tensors plus a `<checkpoint>.json` config sidecar."""

import logging
from pathlib import Path

from ..errors import ConfigInvalid, ShapeMismatch
from ..formats import read_bsdc, write_bsdc
from .models import BsdaConfig
from .network import BsdaModel

logger = logging.getLogger(__name__)


def config_path_for(checkpoint: Path) -> Path:
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(checkpoint.name + ".json")


def save_checkpoint(model: BsdaModel, path: Path) -> None:
    path = Path(path)
    write_bsdc(path, model.state_dict())
    config_path_for(path).write_text(model.config.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"Saved checkpoint to {path}")


def load_checkpoint(path: Path, config: BsdaConfig | None = None) -> BsdaModel:
    """Rebuild the model from the sidecar config (or `config`) and load the tensors.

    Raises ShapeMismatch when the stored tensors do not fit the architecture.
    """
    path = Path(path)
    if config is None:
        sidecar = config_path_for(path)
        if not sidecar.exists():
            raise ConfigInvalid(f"No config next to checkpoint {path} (expected {sidecar})")
        try:
            config = BsdaConfig.model_validate_json(sidecar.read_text(encoding="utf-8"))
        except ValueError as e:
            raise ConfigInvalid(f"{sidecar}: {e}") from e
    model = BsdaModel(config)
    state = read_bsdc(path)
    try:
        model.load_state_dict(state)
    except ShapeMismatch:
        logger.error(f"Checkpoint {path} does not match a {config.ablation.value} model")
        raise
    return model
