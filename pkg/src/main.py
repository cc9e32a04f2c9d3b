import argparse
import logging
from pathlib import Path

from src.config import configure_logging, load_run_config
from src.model.models import Ablation
from src.pipeline import run_eval, run_synth, run_train

logger = logging.getLogger(__name__)


def run_pipeline(config_path: Path | None, seed: int | None, ablation: Ablation | None, skip_synth: bool) -> dict:
    """synth -> train -> eval on the test split, all under one run directory."""
    run_config = load_run_config(config_path)
    model_config = run_config.resolved_model(ablation=ablation, seed=seed)
    data_dir = run_config.resolved_data_dir()
    out_dir = run_config.resolved_out_dir() / f"{model_config.ablation.value}-seed{model_config.seed}"

    logger.info("Starting BSDA-Net pipeline")
    logger.info(f"Data: {data_dir}")
    logger.info(f"Run directory: {out_dir}")
    logger.info(f"Ablation: {model_config.ablation.value}")

    if skip_synth and (data_dir / "manifest.csv").exists():
        logger.info("Reusing existing dataset")
    else:
        synth_config = run_config.synth
        if seed is not None:
            synth_config = synth_config.model_copy(update={"seed": seed})
        run_synth(synth_config, data_dir)

    trained = run_train(model_config, data_dir, out_dir)
    scored = run_eval(Path(trained["checkpoint"]), data_dir, "test", out_dir)
    logger.info(
        f"Test split: dice={scored['dice']:.2f} hd95={scored['hd95']:.2f}"
        + (f" accuracy={scored['accuracy']:.2f}" if "accuracy" in scored else "")
    )
    return {"train": trained, "eval": scored}


def run(argv=None):
    parser = argparse.ArgumentParser(description="BSDA-Net synth/train/eval pipeline runner")
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="RunConfig JSON (defaults to built-in settings).",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Override the model and synth seeds.",
    )
    parser.add_argument(
        "--ablate",
        choices=[a.value for a in Ablation],
        default=None,
        help="Build a reduced network variant.",
    )
    parser.add_argument(
        "--skip-synth",
        action="store_true",
        help="Reuse the dataset in the data directory when it already has a manifest.",
    )
    args = parser.parse_args(argv)

    configure_logging()
    run_pipeline(
        args.config,
        args.seed,
        Ablation(args.ablate) if args.ablate else None,
        skip_synth=args.skip_synth,
    )


if __name__ == "__main__":
    run()
