"""Synthetic Gaussian cluster datasets and CSV ingestion.

The CSV schema is fixed: header ``f0..f{d-1},target``, one row per sample,
floats written in shortest round-trip decimal form so save/load is bit exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .netcore import Dataset


@dataclass
class ClusterSpec:
    n_samples: int = 5000
    n_clusters: int = 11
    n_features: int = 10
    std: float = 0.05
    center_low: float = 0.0
    center_high: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 2:
            raise ConfigError("n_clusters >= 2 required")
        if self.std <= 0:
            raise ConfigError("std must be positive")
        if self.n_samples < 1 or self.n_features < 1:
            raise ConfigError("n_samples and n_features must be positive")
        if not self.center_low < self.center_high:
            raise ConfigError("center_low < center_high required")


def gen_clusters(spec: ClusterSpec) -> Dataset:
    """Isotropic Gaussian blobs around uniform random centers.

    Cluster centers are uniform in [center_low, center_high]^d. Samples are
    assigned round-robin (sample i belongs to cluster i mod n_clusters), so
    class counts are balanced up to the remainder. Targets are the cluster
    labels 1..n_clusters.
    """
    rng = np.random.default_rng(spec.seed)
    centers = rng.uniform(
        spec.center_low, spec.center_high, size=(spec.n_clusters, spec.n_features)
    )
    labels = np.arange(spec.n_samples) % spec.n_clusters
    noise = rng.normal(0.0, spec.std, size=(spec.n_samples, spec.n_features))
    features = centers[labels] + noise
    return Dataset(features, (labels + 1).astype(np.float64), name="clusters")


def split(data: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then floor(M * fraction) samples for training."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must be strictly between 0 and 1")
    M = len(data)
    n_train = int(M * train_fraction)
    if n_train < 1 or n_train >= M:
        raise ConfigError(f"split of {M} samples at {train_fraction} leaves an empty part")
    order = np.random.default_rng(seed).permutation(M)
    tr, te = order[:n_train], order[n_train:]
    return (
        Dataset(data.features[tr], data.targets[tr], name=data.name),
        Dataset(data.features[te], data.targets[te], name=data.name),
    )


def save_csv(data: Dataset, path: str | Path) -> None:
    d = data.features.shape[1]
    header = ",".join([f"f{i}" for i in range(d)] + ["target"])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row, target in zip(data.features, data.targets):
            cells = [repr(float(v)) for v in row] + [repr(float(target))]
            fh.write(",".join(cells) + "\n")


def load_csv(path: str | Path) -> Dataset:
    """Parse the documented schema; leading '#' comment lines are skipped."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    rows = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip()]
    while rows and rows[0][1].lstrip().startswith("#"):
        rows.pop(0)
    if not rows:
        raise ParseError(f"{path}: no header row")
    header_line_no, header = rows[0]
    cols = [c.strip() for c in header.split(",")]
    if cols[-1] != "target":
        raise ParseError(f"{path}: line {header_line_no}: last column must be 'target'")
    expected = [f"f{i}" for i in range(len(cols) - 1)]
    if cols[:-1] != expected:
        raise ParseError(f"{path}: line {header_line_no}: feature columns must be f0..f{len(cols) - 2}")
    features = []
    targets = []
    for line_no, line in rows[1:]:
        cells = line.split(",")
        if len(cells) != len(cols):
            raise ParseError(f"{path}: line {line_no}: expected {len(cols)} cells, got {len(cells)}")
        vals = []
        for col_no, cell in enumerate(cells):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"{path}: line {line_no}, column {cols[col_no]}: non-numeric cell {cell.strip()!r}"
                ) from None
        features.append(vals[:-1])
        targets.append(vals[-1])
    if not features:
        raise ParseError(f"{path}: no data rows")
    return Dataset(np.array(features), np.array(targets), name=path.stem)
