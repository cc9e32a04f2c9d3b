"""
Pipeline stages shared by the CLI package and the src.main runner.

Each stage takes explicit paths, does its work through the library modules
and returns a JSON-serialisable summary. Stages raise library errors; the
callers decide how to report them.
"""

import logging
from pathlib import Path

import numpy as np

from .dataset import load_dataset
from .disttrans import brute_force_sdm, normalize_sdm, normalized_sdm
from .errors import BsdaError, ConfigInvalid
from .formats import read_mask, write_bsdt, write_mask
from .heatmap import HeatmapParams, boundary_heatmap
from .maskops import BinaryMask
from .metrics import write_class_csv, write_confusion_csv, write_seg_csv
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.evaluation import EvaluationResult, evaluate, predict, score_predictions
from .model.models import Ablation, BsdaConfig
from .model.network import BsdaModel
from .model.training import train, write_history
from .synth import SynthConfig, gen_dataset

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.bsdc"
HISTORY_NAME = "history.csv"
SEG_REPORT_NAME = "segmentation.csv"
CLASS_REPORT_NAME = "classification.csv"
CONFUSION_NAME = "confusion.csv"


def run_synth(config: SynthConfig, out_dir: Path) -> dict:
    rows = gen_dataset(config, out_dir)
    splits = {}
    for row in rows:
        splits[row.split] = splits.get(row.split, 0) + 1
    return {"out": str(out_dir), "samples": len(rows), "splits": splits, "seed": config.seed}


def _target_summary(sid: str, g_sd: np.ndarray, g_bd: np.ndarray) -> dict:
    return {
        "id": sid,
        "sdm_min": float(g_sd.min()),
        "sdm_max": float(g_sd.max()),
        "bd_min": float(g_bd.min()),
        "bd_max": float(g_bd.max()),
    }


def run_targets(masks_dir: Path, params: HeatmapParams, out_dir: Path, oracle: bool = False) -> dict:
    """Write `<id>.sdm.bsdt` and `<id>.bd.bsdt` per mask; bad masks are collected, not fatal."""
    masks_dir, out_dir = Path(masks_dir), Path(out_dir)
    paths = sorted(masks_dir.glob("*.pgm"))
    files, failures = [], []
    for path in paths:
        sid = path.stem
        try:
            mask = read_mask(path)
            g_sd = normalized_sdm(mask).values
            g_bd = boundary_heatmap(mask, params).values
        except BsdaError as e:
            logger.warning(f"Skipping {path}: {e}")
            failures.append({"file": str(path), "error": type(e).__name__, "message": str(e)})
            continue
        write_bsdt(out_dir / f"{sid}.sdm.bsdt", g_sd)
        write_bsdt(out_dir / f"{sid}.bd.bsdt", g_bd)
        entry = _target_summary(sid, g_sd, g_bd)
        if oracle:
            reference = normalize_sdm(brute_force_sdm(mask)).values
            entry["oracle_max_abs_diff"] = float(np.abs(reference - g_sd).max())
        files.append(entry)
    logger.info(f"Targets: {len(files)} written, {len(failures)} failed, from {masks_dir}")
    return {"out": str(out_dir), "written": len(files), "files": files, "failures": failures}


def run_train(config: BsdaConfig, data_dir: Path, out_dir: Path, targets_dir: Path | None = None) -> dict:
    data_dir, out_dir = Path(data_dir), Path(out_dir)
    params = config.heatmap_params()
    train_set = load_dataset(data_dir, "train", params, targets_dir)
    try:
        val_set = load_dataset(data_dir, "val", params, targets_dir)
    except BsdaError:
        val_set = None
    model = BsdaModel(config)
    model, history = train(model, train_set, config, val_dataset=val_set)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out_dir / CHECKPOINT_NAME)
    write_history(out_dir / HISTORY_NAME, history)
    last = history[-1]
    return {
        "checkpoint": str(out_dir / CHECKPOINT_NAME),
        "history": str(out_dir / HISTORY_NAME),
        "epochs": len(history),
        "ablation": config.ablation.value,
        "final": last.model_dump(),
    }


def write_reports(result: EvaluationResult, out_dir: Path, class_names: list[str]) -> dict:
    out_dir = Path(out_dir)
    summary = write_seg_csv(out_dir / SEG_REPORT_NAME, result.scores)
    payload = {
        "segmentation": str(out_dir / SEG_REPORT_NAME),
        "samples": summary.n_samples,
        "dice": summary.mean.dice,
        "jaccard": summary.mean.jaccard,
        "asd": summary.mean.asd,
        "hd95": summary.mean.hd95,
        "distance_errors": summary.n_distance_errors,
    }
    if result.report is not None:
        write_class_csv(out_dir / CLASS_REPORT_NAME, result.report)
        payload.update(
            classification=str(out_dir / CLASS_REPORT_NAME),
            accuracy=result.report.accuracy,
            kappa=result.report.kappa,
        )
    if result.confusion is not None:
        write_confusion_csv(out_dir / CONFUSION_NAME, result.confusion, class_names)
        payload["confusion"] = str(out_dir / CONFUSION_NAME)
    return payload


def run_eval(checkpoint: Path | None, data_dir: Path, split: str, out_dir: Path, oracle_gt: bool = False) -> dict:
    """Score a checkpoint on one split; oracle_gt scores the ground truth against itself."""
    if oracle_gt:
        dataset = load_dataset(data_dir, split)
        result = score_predictions(
            dataset.ids, dataset.masks, dataset.masks,
            true_labels=dataset.labels, pred_labels=dataset.labels, class_names=dataset.class_names,
        )
    else:
        if checkpoint is None:
            raise ConfigInvalid("A checkpoint is required unless the ground-truth oracle is used")
        model = load_checkpoint(checkpoint)
        dataset = load_dataset(data_dir, split, model.config.heatmap_params())
        result = evaluate(model, dataset)
    payload = write_reports(result, out_dir, dataset.class_names)
    payload.update(split=split, oracle=oracle_gt)
    return payload


def run_predict(checkpoint: Path, data_dir: Path, split: str, out_dir: Path) -> dict:
    """Per sample: `<id>.mask.pgm`, raw `<id>.bd.bsdt` / `<id>.sdm.bsdt`, and the predicted class."""
    model = load_checkpoint(checkpoint)
    dataset = load_dataset(data_dir, split, model.config.heatmap_params())
    predictions = predict(model, dataset.images)
    out_dir = Path(out_dir)
    labels = predictions.labels
    rows = []
    for i, sid in enumerate(dataset.ids):
        write_mask(out_dir / f"{sid}.mask.pgm", BinaryMask(predictions.masks[i]))
        if predictions.boundary is not None:
            write_bsdt(out_dir / f"{sid}.bd.bsdt", predictions.boundary[i])
        if predictions.sdm is not None:
            write_bsdt(out_dir / f"{sid}.sdm.bsdt", predictions.sdm[i])
        rows.append({"id": sid, "class": dataset.class_names[int(labels[i])] if labels is not None else None})
    logger.info(f"Wrote predictions for {len(rows)} samples to {out_dir}")
    return {"out": str(out_dir), "split": split, "predictions": rows}


def run_ablation_study(config: BsdaConfig, variants: list[Ablation], seeds: list[int], data_dir: Path,
                       out_dir: Path) -> dict:
    """Train and test-score every (variant, seed); report per-variant means."""
    out_dir = Path(out_dir)
    per_variant: dict[str, dict] = {}
    for variant in variants:
        runs = []
        for seed in seeds:
            run_config = config.model_copy(update={"ablation": variant, "seed": seed})
            run_dir = out_dir / f"{variant.value}-seed{seed}"
            trained = run_train(BsdaConfig.model_validate(run_config.model_dump()), data_dir, run_dir)
            scored = run_eval(Path(trained["checkpoint"]), data_dir, "test", run_dir)
            runs.append(scored)
        accuracies = [r["accuracy"] for r in runs if "accuracy" in r]
        per_variant[variant.value] = {
            "seeds": list(seeds),
            "dice": float(np.mean([r["dice"] for r in runs])),
            "hd95": float(np.mean([r["hd95"] for r in runs])),
            "accuracy": float(np.mean(accuracies)) if accuracies else None,
        }
        logger.info(f"Ablation {variant.value}: {per_variant[variant.value]}")
    return per_variant
