"""Experiment runner CLI: synth, train, evaluate, sweep, robustness, report."""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

import click

from .data import SynthSpec, load_dataset, synth_dataset
from .errors import LatentGraphError
from .graphs import TopologySpec
from .metrics import accuracy, auroc
from .models import ModelConfig
from .sweep import (SweepCell, attach_topology, cell_result_dict, default_grid,
                    load_checkpoint, render_report, robustness_eval, run_sweep,
                    save_checkpoint, splits_with_topology, write_curve)
from .training import TrainConfig, aggregate, evaluate_head, train


def _fail(exc: Exception):
    click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
    sys.exit(1)


def _parse_seeds(text: str) -> tuple:
    try:
        return tuple(int(s) for s in text.split(","))
    except ValueError:
        raise click.BadParameter(f"seeds must be comma-separated integers, got {text!r}")


def _load_config(path) -> dict:
    return json.loads(Path(path).read_text()) if path else {}


def _train_config(cfg: dict, seeds, epochs, batch_size) -> TrainConfig:
    return TrainConfig(
        batch_size=batch_size or cfg.get("batch_size", 16),
        epochs=epochs or cfg.get("epochs", 300),
        initial_lr=cfg.get("initial_lr", 0.001),
        lr_decay=cfg.get("lr_decay", 0.995),
        weight_decay=cfg.get("weight_decay", 0.1),
        seeds=tuple(seeds) if seeds else tuple(cfg.get("seeds", (0, 1, 2))),
    )


@click.group()
def main():
    """Latent-graph classification experiments."""


@main.command()
@click.option("--out", required=True, type=click.Path(), help="output directory")
@click.option("--subjects", default="200,50,100", show_default=True,
              help="train,val,test subject counts")
@click.option("--classes", default=2, show_default=True)
@click.option("--signal", default=5.0, show_default=True)
@click.option("--noise", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
def synth(out, subjects, classes, signal, noise, seed):
    """Generate a synthetic dataset (feature files + manifest)."""
    counts = [int(s) for s in subjects.split(",")]
    if len(counts) != 3:
        raise click.BadParameter("--subjects needs three comma-separated counts")
    try:
        spec = SynthSpec(num_train=counts[0], num_val=counts[1], num_test=counts[2],
                         num_classes=classes, signal=signal, noise=noise, seed=seed)
        manifest = synth_dataset(spec, out)
    except LatentGraphError as exc:
        _fail(exc)
    click.echo(json.dumps({"manifest": str(manifest)}))


@main.command(name="train")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--config", type=click.Path(exists=True), help="JSON config file")
@click.option("--arch", type=click.Choice(["sage", "gat", "cond_mlp"]), default=None)
@click.option("--topology", default=None,
              help="fully_connected|star|line|custom|L1|L2|Linf|cosine")
@click.option("--k", type=int, default=None, help="neighbor count (encoding-based only)")
@click.option("--seeds", default=None, help="comma-separated run seeds")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
def train_cmd(manifest, out, config, arch, topology, k, seeds, epochs, batch_size):
    """Train one configuration over its seeds; saves histories + checkpoints."""
    try:
        cfg = _load_config(config)
        arch = arch or cfg.get("arch", "sage")
        train_cfg = _train_config(cfg, _parse_seeds(seeds) if seeds else None,
                                  epochs, batch_size)
        spec = TopologySpec(topology or cfg.get("topology", "custom"),
                            k if k is not None else cfg.get("k"))

        dataset = load_dataset(manifest)
        splits = splits_with_topology(dataset, spec)
        model_cfg = ModelConfig(arch=arch, num_classes=dataset.num_classes,
                                hidden_dim=cfg.get("hidden_dim"))

        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        results = []
        for seed in train_cfg.seeds:
            result, history, head = train(model_cfg, train_cfg, splits, seed)
            results.append(result)
            with open(out_dir / f"history_seed{seed}.jsonl", "w") as fh:
                for record in history:
                    fh.write(json.dumps(record.to_json_dict()) + "\n")
            save_checkpoint(out_dir / f"checkpoint_seed{seed}.npz", head, spec, seed)
        summary = cell_result_dict(SweepCell(arch, spec), aggregate(results))
        (out_dir / "result.json").write_text(json.dumps(summary, indent=2))
        click.echo(json.dumps(summary, indent=2))
    except LatentGraphError as exc:
        _fail(exc)


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--level", type=float, default=0.0, show_default=True,
              help="perturbation level of the features to evaluate on")
def evaluate(manifest, checkpoint, level):
    """Evaluate a saved checkpoint on a manifest's test split."""
    try:
        head, spec, _seed = load_checkpoint(checkpoint)
        dataset = load_dataset(manifest, perturbation_level=level)
        if not dataset.test:
            raise LatentGraphError(f"no test records at perturbation level {level}")
        batch = evaluate_head(head, attach_topology(dataset.test, spec))
        click.echo(json.dumps({
            "level": level,
            "test_auroc": auroc(batch),
            "test_acc": accuracy(batch),
            "num_subjects": len(dataset.test),
        }))
    except LatentGraphError as exc:
        _fail(exc)


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--epochs", type=int, default=300, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--k-grid", default="3,5,7,9", show_default=True)
@click.option("--archs", default="sage,gat", show_default=True)
@click.option("--slice-only", is_flag=True, help="restrict to slice-based topologies")
def sweep(manifest, out, seeds, epochs, batch_size, workers, k_grid, archs, slice_only):
    """Run the full {topology x convolution} grid, resumable per cell."""
    try:
        train_cfg = TrainConfig(batch_size=batch_size, epochs=epochs,
                                seeds=_parse_seeds(seeds))
        if slice_only:
            grid = default_grid(k_grid=(), metrics=(),
                                convolutions=tuple(archs.split(",")))
        else:
            grid = default_grid(k_grid=tuple(int(s) for s in k_grid.split(",")),
                                convolutions=tuple(archs.split(",")))
        summary = run_sweep(manifest, out, train_cfg, grid=grid, workers=workers)
        click.echo(json.dumps({"cells": len(summary["cells"]),
                               "best": summary["best"]}, indent=2))
    except LatentGraphError as exc:
        _fail(exc)


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--levels", required=True, help="comma-separated perturbation levels")
@click.option("--out", required=True, type=click.Path())
def robustness(manifest, checkpoint, levels, out):
    """AUROC of a frozen checkpoint across perturbation levels."""
    try:
        level_list = [float(s) for s in levels.split(",")]
        curve = robustness_eval(manifest, checkpoint, level_list)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "robustness_curve.csv"
        write_curve(curve, path)
        click.echo(json.dumps({"curve": curve, "path": str(path)}))
    except LatentGraphError as exc:
        _fail(exc)


@main.command()
@click.option("--results", required=True, type=click.Path(exists=True),
              help="sweep output directory (with cells/)")
@click.option("--out", required=True, type=click.Path())
def report(results, out):
    """Render sweep cells into CSV + text tables; copy robustness curves."""
    try:
        results_dir = Path(results)
        cells = sorted((results_dir / "cells").glob("*.json"))
        rows = [json.loads(p.read_text()) for p in cells]
        if not rows:
            raise LatentGraphError(f"no cell results under {results_dir}/cells")
        csv_path, txt_path = render_report(rows, out)
        copied = []
        for curve_file in sorted(results_dir.glob("**/robustness_curve.csv")):
            target = Path(out) / curve_file.name
            if curve_file.resolve() != target.resolve():
                shutil.copyfile(curve_file, target)
            copied.append(str(target))
        click.echo(json.dumps({"csv": str(csv_path), "txt": str(txt_path),
                               "curves": copied}))
    except LatentGraphError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
