"""Feature-file format, JSONL manifests, and the synthetic dataset generator.

Feature files are the byte-level contract with the volume encoder:

    offset 0   magic      4 bytes  b"LGF1"
    offset 4   version    u16 LE   1
    offset 6   num_slices u32 LE   64
    offset 10  feat_dim   u32 LE   1152
    offset 14  payload    num_slices * feat_dim float32 LE, row-major

Manifests are line-delimited JSON records; they are the single source of split
membership, and perturbation level is a record attribute (same subjects at
several levels live in one manifest).
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .graphs import FEAT_DIM, NUM_SLICES

MAGIC = b"LGF1"
VERSION = 1
HEADER = struct.Struct("<4sHII")   # magic, version, num_slices, feat_dim
SPLITS = ("train", "val", "test")


def write_feature_file(path, features: np.ndarray):
    """Write one subject's (64, 1152) feature matrix; payload is float32 LE."""
    features = np.asarray(features)
    if features.shape != (NUM_SLICES, FEAT_DIM):
        raise DataError(f"features must be {(NUM_SLICES, FEAT_DIM)}, got {features.shape}")
    if not np.isfinite(features).all():
        raise DataError("features must be finite")
    payload = np.ascontiguousarray(features, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, NUM_SLICES, FEAT_DIM))
        fh.write(payload.tobytes())


def read_feature_file(path) -> np.ndarray:
    """Read a feature file back as float64 (widened from the float32 payload)."""
    with open(path, "rb") as fh:
        header = fh.read(HEADER.size)
        if len(header) < HEADER.size:
            raise FormatError(f"{path}: truncated header ({len(header)} of {HEADER.size} bytes)")
        magic, version, num_slices, feat_dim = HEADER.unpack(header)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r} at offset 0")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version} at offset 4")
        if num_slices != NUM_SLICES:
            raise FormatError(f"{path}: num_slices={num_slices} at offset 6, expected {NUM_SLICES}")
        if feat_dim != FEAT_DIM:
            raise FormatError(f"{path}: feat_dim={feat_dim} at offset 10, expected {FEAT_DIM}")
        expected = num_slices * feat_dim * 4
        payload = fh.read(expected + 1)
    if len(payload) != expected:
        kind = "truncated" if len(payload) < expected else "oversized"
        raise FormatError(
            f"{path}: {kind} payload ({min(len(payload), expected + 1)} vs {expected} bytes "
            f"after offset {HEADER.size})")
    features = np.frombuffer(payload, dtype="<f4").reshape(num_slices, feat_dim)
    if not np.isfinite(features).all():
        raise FormatError(f"{path}: non-finite payload values")
    return features.astype(np.float64)


@dataclass(frozen=True)
class ManifestRecord:
    subject_id: str
    split: str
    label: int
    num_classes: int
    feature_path: str
    perturbation_level: float = 0.0

    def to_json(self) -> str:
        return json.dumps({
            "subject_id": self.subject_id,
            "split": self.split,
            "label": self.label,
            "num_classes": self.num_classes,
            "feature_path": self.feature_path,
            "perturbation_level": self.perturbation_level,
        }, sort_keys=True)


def write_manifest(path, records: list[ManifestRecord]):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_manifest(path) -> list[ManifestRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                records.append(ManifestRecord(
                    subject_id=str(raw["subject_id"]),
                    split=str(raw["split"]),
                    label=int(raw["label"]),
                    num_classes=int(raw["num_classes"]),
                    feature_path=str(raw["feature_path"]),
                    perturbation_level=float(raw.get("perturbation_level", 0.0)),
                ))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad manifest record: {exc}") from exc
    return records


@dataclass
class SubjectRecord:
    """A loaded subject before topology attachment."""

    subject_id: str
    features: np.ndarray
    label: int


@dataclass
class DatasetSplits:
    train: list[SubjectRecord]
    val: list[SubjectRecord]
    test: list[SubjectRecord]
    num_classes: int

    def split(self, name: str) -> list[SubjectRecord]:
        return getattr(self, name)


def load_dataset(manifest_path, perturbation_level: float = 0.0) -> DatasetSplits:
    """Load all subjects at one perturbation level, validating every file.

    Collects all offenders (missing/corrupt files, bad labels, duplicate ids)
    before raising, so one pass reports everything.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    records = read_manifest(manifest_path)
    selected = [r for r in records if r.perturbation_level == perturbation_level]
    if not selected:
        levels = sorted({r.perturbation_level for r in records})
        warnings.warn(
            f"no records at perturbation level {perturbation_level} "
            f"(available: {levels}); returning empty splits")
        return DatasetSplits([], [], [], num_classes=0)

    num_classes = selected[0].num_classes
    problems = []
    seen_ids = set()
    splits = {name: [] for name in SPLITS}
    for rec in selected:
        key = (rec.split, rec.subject_id)
        if key in seen_ids:
            problems.append(f"duplicate subject_id {rec.subject_id!r} in split {rec.split!r}")
            continue
        seen_ids.add(key)
        if rec.split not in SPLITS:
            problems.append(f"{rec.subject_id}: unknown split {rec.split!r}")
            continue
        if rec.num_classes != num_classes:
            problems.append(f"{rec.subject_id}: num_classes {rec.num_classes} != {num_classes}")
            continue
        if not 0 <= rec.label < num_classes:
            problems.append(f"{rec.subject_id}: label {rec.label} outside [0, {num_classes})")
            continue
        path = base / rec.feature_path
        try:
            features = read_feature_file(path)
        except (OSError, FormatError) as exc:
            problems.append(f"{rec.subject_id}: {exc}")
            continue
        splits[rec.split].append(SubjectRecord(rec.subject_id, features, rec.label))
    if problems:
        raise DataError("manifest load failed:\n  " + "\n  ".join(problems))
    return DatasetSplits(splits["train"], splits["val"], splits["test"], num_classes)


@dataclass(frozen=True)
class SynthSpec:
    """Desk-scale synthetic dataset: per-class signal pattern plus iid noise."""

    num_train: int = 200
    num_val: int = 50
    num_test: int = 100
    num_classes: int = 2
    signal: float = 5.0
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2 or self.num_classes > NUM_SLICES:
            raise DataError(f"num_classes must lie in [2, {NUM_SLICES}]")
        if min(self.num_train, self.num_val, self.num_test) < self.num_classes:
            raise DataError("each split needs at least one subject per class")
        if self.signal < 0 or self.noise < 0:
            raise DataError("signal and noise must be non-negative")


def class_patterns(num_classes: int, seed: int) -> np.ndarray:
    """Fixed per-class unit vectors in feature space, derived from the seed."""
    rng = np.random.default_rng([seed, 0xC1A55])
    patterns = rng.standard_normal((num_classes, FEAT_DIM))
    return patterns / np.linalg.norm(patterns, axis=1, keepdims=True)


def class_row_mask(num_classes: int, label: int) -> np.ndarray:
    """Slice rows carrying class `label`'s signal: rows r with r % C == label."""
    return np.arange(NUM_SLICES) % num_classes == label


def synth_dataset(spec: SynthSpec, out_dir) -> Path:
    """Generate feature files plus a manifest; returns the manifest path.

    Subject features are noise * N(0,1) everywhere, plus signal * pattern_c
    added to the class-dependent subset of slice rows, so class-conditional
    pooled means separate linearly once signal is large against noise/8.
    """
    out_dir = Path(out_dir)
    features_dir = out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([spec.seed, 0xDA7A])
    patterns = class_patterns(spec.num_classes, spec.seed)

    records = []
    counts = {"train": spec.num_train, "val": spec.num_val, "test": spec.num_test}
    for split, count in counts.items():
        labels = np.arange(count) % spec.num_classes   # balanced by construction
        for i in range(count):
            label = int(labels[i])
            feats = spec.noise * rng.standard_normal((NUM_SLICES, FEAT_DIM))
            feats[class_row_mask(spec.num_classes, label)] += spec.signal * patterns[label]
            subject_id = f"{split}_{i:04d}"
            rel_path = f"features/{subject_id}.lgf"
            write_feature_file(out_dir / rel_path, feats)
            records.append(ManifestRecord(
                subject_id=subject_id, split=split, label=label,
                num_classes=spec.num_classes, feature_path=rel_path,
                perturbation_level=0.0))
    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(manifest_path, records)
    return manifest_path
