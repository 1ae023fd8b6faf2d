"""Experiment engine: checkpointing, the topology/convolution sweep,
robustness curves, and report rendering.

Sweep cells are independent, keyed by a deterministic hash of their full
configuration, and persisted one JSON file per cell so interrupted sweeps
resume by skipping completed cells.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DatasetSplits, SubjectRecord, load_dataset
from .errors import ConfigError, DataError
from .graphs import KNN_METRICS, SLICE_KINDS, SubjectGraph, TopologySpec, build_topology
from .metrics import auroc
from .models import Head, ModelConfig, build_head
from .training import AggregateResult, Splits, TrainConfig, evaluate_head, repeat_runs

DEFAULT_K_GRID = (3, 5, 7, 9)
CONVOLUTIONS = ("sage", "gat")


def attach_topology(records: list[SubjectRecord], spec: TopologySpec) -> list[SubjectGraph]:
    """Build one SubjectGraph per record; slice-based edge sets are shared."""
    if not records:
        return []
    shared = None
    if spec.family == "slice_based":
        shared = build_topology(spec, records[0].features)
    graphs = []
    for rec in records:
        edges = shared if shared is not None else build_topology(spec, rec.features)
        graphs.append(SubjectGraph(rec.features, edges, rec.label, rec.subject_id))
    return graphs


def splits_with_topology(dataset: DatasetSplits, spec: TopologySpec) -> Splits:
    return Splits(
        train=attach_topology(dataset.train, spec),
        val=attach_topology(dataset.val, spec),
        test=attach_topology(dataset.test, spec),
    )


# --------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, head: Head, topology: TopologySpec, seed: int):
    """Single .npz: parameter arrays plus a JSON metadata string (no pickle)."""
    meta = {
        "arch": head.config.arch,
        "num_classes": head.config.num_classes,
        "in_dim": head.config.in_dim,
        "hidden_dim": head.config.hidden_dim,
        "topology_kind": topology.kind,
        "topology_k": topology.k,
        "seed": seed,
    }
    arrays = {f"param_{i}": arr for i, arr in enumerate(head.state())}
    np.savez(path, meta=np.str_(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path) -> tuple[Head, TopologySpec, int]:
    with np.load(path) as blob:
        meta = json.loads(str(blob["meta"]))
        arrays = [blob[f"param_{i}"] for i in range(len(blob.files) - 1)]
    config = ModelConfig(arch=meta["arch"], num_classes=meta["num_classes"],
                         in_dim=meta["in_dim"], hidden_dim=meta["hidden_dim"])
    head = build_head(config, np.random.default_rng(0))
    head.load_state(arrays)
    topology = TopologySpec(meta["topology_kind"], meta["topology_k"])
    return head, topology, int(meta["seed"])


# --------------------------------------------------------------------------
# sweep

@dataclass(frozen=True)
class SweepCell:
    arch: str
    topology: TopologySpec

    def label(self) -> str:
        return f"{self.arch}/{self.topology.label()}"


def default_grid(k_grid=DEFAULT_K_GRID, slice_kinds=SLICE_KINDS,
                 metrics=KNN_METRICS, convolutions=CONVOLUTIONS) -> list[SweepCell]:
    """{4 slice topologies + 4 metrics x |k_grid|} x {sage, gat}."""
    specs = [TopologySpec(kind) for kind in slice_kinds]
    specs += [TopologySpec(metric, k) for metric in metrics for k in k_grid]
    return [SweepCell(arch, spec) for arch in convolutions for spec in specs]


def cell_id(manifest_path, cell: SweepCell, train_cfg: TrainConfig) -> str:
    """Deterministic key for one (dataset, cell config, seeds) combination."""
    canon = json.dumps({
        "manifest": str(Path(manifest_path).resolve()),
        "arch": cell.arch,
        "topology": cell.topology.kind,
        "k": cell.topology.k,
        "seeds": list(train_cfg.seeds),
        "epochs": train_cfg.epochs,
        "batch_size": train_cfg.batch_size,
        "initial_lr": train_cfg.initial_lr,
        "lr_decay": train_cfg.lr_decay,
        "weight_decay": train_cfg.weight_decay,
    }, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def cell_result_dict(cell: SweepCell, agg: AggregateResult) -> dict:
    return {
        "arch": cell.arch,
        "topology": cell.topology.kind,
        "k": cell.topology.k,
        "mean_auroc": agg.mean_auroc,
        "std_auroc": agg.std_auroc,
        "mean_acc": agg.mean_acc,
        "std_acc": agg.std_acc,
        "mean_minutes": agg.mean_minutes,
        "runs": [{
            "seed": r.seed, "best_epoch": r.best_epoch,
            "val_auroc_at_best": r.val_auroc_at_best,
            "test_auroc": r.test_auroc, "test_acc": r.test_acc,
            "wall_clock_minutes": r.wall_clock_minutes,
            "diagnostic": r.diagnostic,
        } for r in agg.runs],
    }


def _run_cell(manifest_path: str, arch: str, kind: str, k, train_cfg: TrainConfig) -> dict:
    """Worker entry point: load data, build graphs, train all seeds."""
    cell = SweepCell(arch, TopologySpec(kind, k))
    dataset = load_dataset(manifest_path)
    splits = splits_with_topology(dataset, cell.topology)
    model_cfg = ModelConfig(arch=arch, num_classes=dataset.num_classes)
    agg = repeat_runs(model_cfg, train_cfg, splits)
    return cell_result_dict(cell, agg)


def best_cell(results: list[dict]) -> dict | None:
    """Max mean AUROC; ties go to higher ACC, then to the lexicographic label."""
    ok = [r for r in results if "error" not in r]
    if not ok:
        return None
    def sort_key(r):
        label = f"{r['arch']}/{r['topology']}" + (f"-k{r['k']}" if r["k"] else "")
        return (-r["mean_auroc"], -r["mean_acc"], label)
    return min(ok, key=sort_key)


def run_sweep(manifest_path, out_dir, train_cfg: TrainConfig,
              grid: list[SweepCell] | None = None, workers: int = 1) -> dict:
    """Execute the full grid, persisting one JSON per cell; resumable.

    Per-cell failures are recorded in the cell file and the sweep continues.
    Returns {"cells": [...], "best": {...}}.
    """
    grid = default_grid() if grid is None else grid
    if not grid:
        raise ConfigError("sweep grid is empty")
    out_dir = Path(out_dir)
    cells_dir = out_dir / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)

    pending = []
    results = []
    for cell in grid:
        path = cells_dir / f"{cell_id(manifest_path, cell, train_cfg)}.json"
        if path.exists():
            results.append(json.loads(path.read_text()))
        else:
            pending.append((cell, path))

    def finish(cell, path, outcome):
        outcome["cell_id"] = path.stem
        path.write_text(json.dumps(outcome, indent=2))
        results.append(outcome)

    if workers <= 1:
        for cell, path in pending:
            try:
                outcome = _run_cell(str(manifest_path), cell.arch,
                                    cell.topology.kind, cell.topology.k, train_cfg)
            except Exception as exc:   # cell isolation: record and continue
                outcome = {"arch": cell.arch, "topology": cell.topology.kind,
                           "k": cell.topology.k, "error": f"{type(exc).__name__}: {exc}"}
            finish(cell, path, outcome)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                (cell, path, pool.submit(_run_cell, str(manifest_path), cell.arch,
                                         cell.topology.kind, cell.topology.k, train_cfg))
                for cell, path in pending]
            for cell, path, fut in futures:
                try:
                    outcome = fut.result()
                except Exception as exc:
                    outcome = {"arch": cell.arch, "topology": cell.topology.kind,
                               "k": cell.topology.k, "error": f"{type(exc).__name__}: {exc}"}
                finish(cell, path, outcome)

    summary = {"cells": results, "best": best_cell(results)}
    (out_dir / "sweep_summary.json").write_text(json.dumps(summary, indent=2))
    return summary


# --------------------------------------------------------------------------
# robustness

def robustness_eval(manifest_path, checkpoint_path, levels: list[float]) -> list[tuple[float, float]]:
    """AUROC of a frozen checkpoint on the test split at each perturbation level."""
    head, topology, _ = load_checkpoint(checkpoint_path)
    curve = []
    for level in levels:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")   # absent level surfaces as DataError below
            dataset = load_dataset(manifest_path, perturbation_level=level)
        if not dataset.test:
            raise DataError(f"manifest has no test records at perturbation level {level}")
        graphs = attach_topology(dataset.test, topology)
        batch = evaluate_head(head, graphs)
        curve.append((float(level), auroc(batch)))
    return curve


# --------------------------------------------------------------------------
# reporting

def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.3f} ± {std:.3f}"


def render_report(results: list[dict], out_dir) -> tuple[Path, Path]:
    """Emit machine-readable CSV and a human-readable table of sweep results.

    One row per result dict (as produced by cell_result_dict); the best row is
    annotated with its configuration "conv / topology / k".
    """
    if not results:
        raise ConfigError("nothing to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ok = [r for r in results if "error" not in r]
    best = best_cell(results)

    csv_path = out_dir / "report.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("arch,topology,k,mean_auroc,std_auroc,mean_acc,std_acc,mean_minutes\n")
        for r in ok:
            k = "n/a" if r["k"] is None else r["k"]
            fh.write(f"{r['arch']},{r['topology']},{k},"
                     f"{r['mean_auroc']:.6f},{r['std_auroc']:.6f},"
                     f"{r['mean_acc']:.6f},{r['std_acc']:.6f},"
                     f"{r['mean_minutes']:.3f}\n")

    txt_path = out_dir / "report.txt"
    with open(txt_path, "w", encoding="utf-8") as fh:
        header = (f"{'Model':<10} {'Topology':<16} {'k':>4}  "
                  f"{'AUROC':<16} {'ACC':<16} {'Runtime (min)':>13}")
        fh.write(header + "\n" + "-" * len(header) + "\n")
        for r in ok:
            k = "n/a" if r["k"] is None else str(r["k"])
            fh.write(f"{r['arch']:<10} {r['topology']:<16} {k:>4}  "
                     f"{format_mean_std(r['mean_auroc'], r['std_auroc']):<16} "
                     f"{format_mean_std(r['mean_acc'], r['std_acc']):<16} "
                     f"{r['mean_minutes']:>13.2f}\n")
        failed = [r for r in results if "error" in r]
        for r in failed:
            fh.write(f"{r['arch']:<10} {r['topology']:<16} "
                     f"{'n/a' if r['k'] is None else r['k']:>4}  FAILED: {r['error']}\n")
        if best is not None:
            k = "n/a" if best["k"] is None else best["k"]
            fh.write(f"\nBest configuration: {best['arch']} / {best['topology']} / k={k} "
                     f"(AUROC {format_mean_std(best['mean_auroc'], best['std_auroc'])})\n")
    return csv_path, txt_path


def write_curve(curve: list[tuple[float, float]], path):
    """Persist a robustness curve as (level, auroc) CSV rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("level,auroc\n")
        for level, value in curve:
            fh.write(f"{level},{value:.6f}\n")
