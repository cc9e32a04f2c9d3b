"""
CLI for BSDA-Net: synthetic data, targets, training, evaluation, prediction
and the gradient-check suite.

ALL OUTPUT IS JSON. Results go to stdout, errors to stderr as
{"error": code, "message": ...}, logs to stderr.

Exit codes:
    0  ok
    1  unexpected error
    2  I/O error (unwritable output, missing dataset)
    3  one or more masks could not be parsed (targets)
    4  config schema violation
    5  checkpoint does not match the model
    6  gradient check failed
"""
import json
import sys
from pathlib import Path
from typing import Any

import click

from src.autodiff.gradcheck import run_suite
from src.config import configure_logging, load_run_config
from src.errors import ConfigInvalid, DataEmpty, ShapeMismatch
from src.heatmap import HeatmapParams
from src.model.models import Ablation
from src.pipeline import run_eval, run_predict, run_synth, run_targets, run_train

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_IO = 2
EXIT_BAD_MASK = 3
EXIT_CONFIG = 4
EXIT_CHECKPOINT = 5
EXIT_GRADCHECK = 6


# =============================================================================
# JSON Output Helpers
# =============================================================================


def output_json(data: Any) -> None:
    """Output data as JSON to stdout."""
    click.echo(json.dumps(data, indent=2, default=str))


def output_error(message: str, code: str = "error") -> None:
    """Output error as JSON to stderr."""
    click.echo(json.dumps({"error": code, "message": message}), err=True)


def fail(message: str, code: str, exit_code: int) -> None:
    output_error(message, code)
    sys.exit(exit_code)


# =============================================================================
# JSON Help Classes
# =============================================================================


def get_param_info(param: click.Parameter) -> dict:
    """Extract parameter info from a Click parameter."""
    param_info: dict[str, Any] = {
        "name": param.name,
        "type": param.type.name if hasattr(param.type, "name") else str(param.type),
        "required": param.required if hasattr(param, "required") else False,
    }
    if isinstance(param, click.Option):
        if param.help:
            param_info["help"] = param.help
        if param.is_flag:
            param_info["is_flag"] = True
    if param.default is not None and param.default != ():
        try:
            json.dumps(param.default)
            param_info["default"] = param.default
        except (TypeError, ValueError):
            pass
    return param_info


class JSONGroup(click.Group):
    """Custom Click Group that outputs help as JSON."""

    def format_help(self, ctx: click.Context, formatter: click.HelpFormatter) -> None:
        pass

    def get_help(self, ctx: click.Context) -> str:
        commands = {
            name: {"help": cmd.help or "", "options": [get_param_info(p) for p in cmd.params if not getattr(p, "hidden", False)]}
            for name, cmd in self.commands.items()
        }
        help_data = {
            "name": ctx.info_name,
            "help": self.help or "",
            "options": [get_param_info(p) for p in self.params],
            "commands": commands,
            "exit_codes": {
                "ok": EXIT_OK, "unexpected": EXIT_UNEXPECTED, "io": EXIT_IO, "bad_mask": EXIT_BAD_MASK,
                "config": EXIT_CONFIG, "checkpoint": EXIT_CHECKPOINT, "gradcheck": EXIT_GRADCHECK,
            },
        }
        return json.dumps(help_data, indent=2)


class JSONCommand(click.Command):
    """Custom Click Command that outputs help as JSON."""

    def format_help(self, ctx: click.Context, formatter: click.HelpFormatter) -> None:
        pass

    def get_help(self, ctx: click.Context) -> str:
        help_data = {
            "name": ctx.info_name,
            "help": self.help or "",
            "options": [get_param_info(p) for p in self.params if not getattr(p, "hidden", False)],
        }
        return json.dumps(help_data, indent=2)


# =============================================================================
# Commands
# =============================================================================


def _load_config(path: Path | None):
    try:
        return load_run_config(path)
    except ConfigInvalid as e:
        fail(str(e), "config_invalid", EXIT_CONFIG)


@click.group(cls=JSONGroup, help="BSDA-Net data generation, training and evaluation.")
@click.option("--seed", type=int, default=None, help="Global seed override for every command")
@click.option("--log-level", default=None, help="Logging level (defaults to BSDA_LOG_LEVEL or INFO)")
@click.pass_context
def app(ctx: click.Context, seed: int | None, log_level: str | None):
    configure_logging(log_level)
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed


@app.command(cls=JSONCommand, name="synth")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="RunConfig JSON")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Dataset directory")
@click.pass_context
def synth_cmd(ctx: click.Context, config_path: Path | None, out: Path | None):
    """Generate the synthetic dataset (images, masks, manifest.csv, config.json)."""
    run_config = _load_config(config_path)
    synth_config = run_config.synth
    if ctx.obj["seed"] is not None:
        synth_config = synth_config.model_copy(update={"seed": ctx.obj["seed"]})
    out = out or run_config.resolved_data_dir()
    try:
        output_json(run_synth(synth_config, out))
    except OSError as e:
        fail(f"Cannot write dataset to {out}: {e}", "io_error", EXIT_IO)


@app.command(cls=JSONCommand, name="targets")
@click.option("--masks", "masks_dir", type=click.Path(path_type=Path), required=True, help="Directory of mask PGMs")
@click.option("--sigma", type=float, default=HeatmapParams().sigma, help="Gaussian sigma in pixels")
@click.option("--floor", type=float, default=HeatmapParams().floor, help="Heatmap floor before normalisation")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output directory for .bsdt targets")
@click.option("--oracle", is_flag=True, help="Also compare each SDM with the brute-force reference")
def targets_cmd(masks_dir: Path, sigma: float, floor: float, out: Path, oracle: bool):
    """Write normalized SDM and boundary heatmap targets for every mask."""
    try:
        params = HeatmapParams(sigma=sigma, floor=floor)
    except ValueError as e:
        fail(str(e), "config_invalid", EXIT_CONFIG)
    try:
        result = run_targets(masks_dir, params, out, oracle=oracle)
    except OSError as e:
        fail(f"Cannot write targets to {out}: {e}", "io_error", EXIT_IO)
    output_json(result)
    if result["failures"]:
        names = ", ".join(f["file"] for f in result["failures"])
        fail(f"{len(result['failures'])} mask(s) failed: {names}", "bad_mask", EXIT_BAD_MASK)


@app.command(cls=JSONCommand, name="train")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="RunConfig JSON")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), default=None, help="Dataset directory")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Run directory for checkpoint and history")
@click.option("--targets", "targets_dir", type=click.Path(path_type=Path), default=None,
              help="Directory of precomputed .bsdt targets")
@click.option("--ablate", type=click.Choice([a.value for a in Ablation]), default=None, help="Network variant")
@click.pass_context
def train_cmd(ctx: click.Context, config_path: Path | None, data_dir: Path | None, out: Path | None,
              targets_dir: Path | None, ablate: str | None):
    """Train a model; writes model.bsdc, its config sidecar and history.csv."""
    run_config = _load_config(config_path)
    try:
        model_config = run_config.resolved_model(
            ablation=Ablation(ablate) if ablate else None, seed=ctx.obj["seed"]
        )
        output_json(run_train(
            model_config,
            data_dir or run_config.resolved_data_dir(),
            out or run_config.resolved_out_dir(),
            targets_dir,
        ))
    except ConfigInvalid as e:
        fail(str(e), "config_invalid", EXIT_CONFIG)
    except (DataEmpty, OSError) as e:
        fail(str(e), "io_error", EXIT_IO)


@app.command(cls=JSONCommand, name="eval")
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None, help="model.bsdc path")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True, help="Dataset directory")
@click.option("--split", default="test", type=click.Choice(["train", "val", "test"]), help="Split to score")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Directory for report CSVs")
@click.option("--oracle-gt", is_flag=True, help="Score ground truth against itself")
def eval_cmd(checkpoint: Path | None, data_dir: Path, split: str, out: Path, oracle_gt: bool):
    """Write segmentation, classification and confusion-matrix CSVs for one split."""
    try:
        output_json(run_eval(checkpoint, data_dir, split, out, oracle_gt=oracle_gt))
    except ShapeMismatch as e:
        fail(str(e), "checkpoint_mismatch", EXIT_CHECKPOINT)
    except ConfigInvalid as e:
        fail(str(e), "config_invalid", EXIT_CONFIG)
    except (DataEmpty, OSError) as e:
        fail(str(e), "io_error", EXIT_IO)


@app.command(cls=JSONCommand, name="predict")
@click.option("--checkpoint", type=click.Path(path_type=Path), required=True, help="model.bsdc path")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True, help="Dataset directory")
@click.option("--split", default="test", type=click.Choice(["train", "val", "test"]), help="Split to predict")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output directory")
def predict_cmd(checkpoint: Path, data_dir: Path, split: str, out: Path):
    """Write predicted masks (PGM) and raw boundary/SDM regressions (BSDT)."""
    try:
        output_json(run_predict(checkpoint, data_dir, split, out))
    except ShapeMismatch as e:
        fail(str(e), "checkpoint_mismatch", EXIT_CHECKPOINT)
    except ConfigInvalid as e:
        fail(str(e), "config_invalid", EXIT_CONFIG)
    except (DataEmpty, OSError) as e:
        fail(str(e), "io_error", EXIT_IO)


@app.command(cls=JSONCommand, name="gradcheck")
@click.option("--seed", "local_seed", type=int, default=None, help="Seed for the random inputs")
@click.option("--seeds", "n_seeds", type=int, default=10, help="Seeds per op")
@click.option("--corrupt", default=None, hidden=True, help="Op whose analytic gradient is deliberately scaled")
@click.pass_context
def gradcheck_cmd(ctx: click.Context, local_seed: int | None, n_seeds: int, corrupt: str | None):
    """Central finite-difference check of every differentiable op."""
    seed = local_seed if local_seed is not None else (ctx.obj["seed"] or 0)
    results = run_suite(seed=seed, n_seeds=n_seeds, corrupt=corrupt)
    table = [
        {"op": r.op, "max_rel_error": r.max_rel_error, "tolerance": r.tolerance, "seeds": r.seeds, "passed": r.passed}
        for r in results
    ]
    failed = [r.op for r in results if not r.passed]
    output_json({"seed": seed, "passed": not failed, "ops": table})
    if failed:
        fail(f"Gradient check failed for: {', '.join(failed)}", "gradcheck_failed", EXIT_GRADCHECK)


def run():
    """Entry point for the CLI."""
    try:
        app()
    except Exception as e:
        output_error(str(e), type(e).__name__)
        sys.exit(EXIT_UNEXPECTED)


if __name__ == "__main__":
    run()
