#!/usr/bin/env python3
"""
Management CLI for BSDA-Net experiments.

Operator commands that chain several pipeline stages: multi-seed ablation
studies and the synthetic-class separability audit.

Usage (from repo root):
    python scripts/mgmt.py --help
    python scripts/mgmt.py separability --data data --human
    python scripts/mgmt.py ablation-study --seeds 0,1,2 --epochs 60 --human
"""

import json
import sys
from pathlib import Path

# Add repo root to path so we can import from src.*
_repo_root = Path(__file__).parent.parent
sys.path.insert(0, str(_repo_root))

import typer

from src.config import configure_logging, load_run_config
from src.errors import BsdaError
from src.model.models import Ablation
from src.pipeline import run_ablation_study, run_synth
from src.synth import separability

app = typer.Typer(
    help="Management CLI for BSDA-Net experiments.",
    no_args_is_help=True,
    add_completion=False,
)

DEFAULT_VARIANTS = "full,single-task,no-fusion,s-only"


def _ensure_dataset(data: Path, config_path: Path | None, seed: int | None, human: bool) -> None:
    if (data / "manifest.csv").exists():
        return
    synth_config = load_run_config(config_path).synth
    if seed is not None:
        synth_config = synth_config.model_copy(update={"seed": seed})
    if human:
        typer.echo(f"No dataset at {data}; generating one (seed {synth_config.seed})...")
    run_synth(synth_config, data)


@app.command("separability")
def separability_cmd(
    data: Path = typer.Option(Path("data"), help="Dataset directory (generated if missing)"),
    config: Path = typer.Option(None, help="RunConfig JSON used when generating"),
    seed: int = typer.Option(None, help="Synth seed used when generating"),
    human: bool = typer.Option(False, "--human", help="Human-readable output"),
):
    """
    Fit a depth-2 stump on (mask area, compactness) over the train split
    and report its test-split accuracy.
    """
    try:
        _ensure_dataset(data, config, seed, human)
        accuracy = separability(data)
    except BsdaError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1)

    if human:
        typer.echo(f"Stump test accuracy: {accuracy:.2f}%")
    else:
        typer.echo(json.dumps({"data": str(data), "accuracy": accuracy}))


@app.command("ablation-study")
def ablation_study_cmd(
    data: Path = typer.Option(Path("data"), help="Dataset directory (generated if missing)"),
    out: Path = typer.Option(Path("runs/ablation"), help="Root directory for per-run outputs"),
    config: Path = typer.Option(None, help="RunConfig JSON"),
    variants: str = typer.Option(DEFAULT_VARIANTS, help="Comma-separated ablation names"),
    seeds: str = typer.Option("0,1,2", help="Comma-separated model seeds"),
    epochs: int = typer.Option(None, help="Override the configured epoch count"),
    human: bool = typer.Option(False, "--human", help="Human-readable output"),
):
    """
    Train and score each variant over several seeds; prints mean test Dice,
    hd95 and accuracy per variant.
    """
    try:
        chosen = [Ablation(v.strip()) for v in variants.split(",") if v.strip()]
        seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    except ValueError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(4)

    try:
        model_config = load_run_config(config).model
        if epochs is not None:
            model_config = model_config.model_copy(update={"epochs": epochs, "tau": min(model_config.tau, epochs - 1)})
        _ensure_dataset(data, config, None, human)
        results = run_ablation_study(model_config, chosen, seed_list, data, out)
    except BsdaError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1)

    if human:
        typer.echo(f"{'variant':<14} {'dice':>8} {'hd95':>8} {'accuracy':>9}")
        for name, row in results.items():
            acc = f"{row['accuracy']:.2f}" if row["accuracy"] is not None else "-"
            typer.echo(f"{name:<14} {row['dice']:>8.2f} {row['hd95']:>8.2f} {acc:>9}")
    else:
        typer.echo(json.dumps(results))


def run():
    """Entry point for the CLI."""
    configure_logging()
    app()


if __name__ == "__main__":
    run()
