"""Intensity surfaces and cell-aggregated Poisson counts."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import AllZeroError, DegenerateModelError, OutOfBoundsError, RegionMismatchError
from .grid import GridRegion, Zone

# Stream ids of the seed tree. Y replicates and auxiliary draws never share a stream.
Y_STREAM = 0
AUX_STREAM = 1


def replicate_rng(base_seed: int, replicate: int = 0, stream: int = Y_STREAM) -> np.random.Generator:
    """Independent generator for one replicate.

    The seed tree is ``SeedSequence(base_seed, spawn_key=(stream, replicate))``,
    so replicate ``r`` draws the same numbers whether it runs alone, in a
    batch or on another worker.
    """
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(stream), int(replicate)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class IntensityField:
    region: GridRegion
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        if values.shape != (self.region.n_cells,):
            raise RegionMismatchError(f"intensity has shape {values.shape}, grid has {self.region.n_cells} cells")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("intensity values must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def expected(self, zone: Zone) -> float:
        return float(self.values[list(zone.cells)].sum() * self.region.cell_area)

    @property
    def cell_means(self) -> np.ndarray:
        return self.values * self.region.cell_area


@dataclass(frozen=True)
class CountField:
    region: GridRegion
    counts: np.ndarray
    seed_provenance: tuple[int, int] | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (self.region.n_cells,):
            raise RegionMismatchError(f"counts have shape {counts.shape}, grid has {self.region.n_cells} cells")
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise ValueError("counts must be nonnegative integers")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def homogeneous_intensity(region: GridRegion, value: float) -> IntensityField:
    return IntensityField(region, np.full(region.n_cells, float(value)))


def two_level_intensity(region: GridRegion, high_cells, high: float, low: float) -> IntensityField:
    """Piecewise-constant surface: ``high`` on the given cells, ``low`` elsewhere."""
    values = np.full(region.n_cells, float(low))
    values[np.asarray(list(high_cells), dtype=np.int64)] = float(high)
    return IntensityField(region, values)


def derive_target_intensity(x_field: IntensityField, alpha: float, beta: float) -> IntensityField:
    """Pointwise affine link ``alpha + beta * lambda_X``."""
    if alpha < 0 or beta < 0:
        raise DegenerateModelError("alpha and beta must be nonnegative")
    if alpha == 0 and beta == 0:
        raise DegenerateModelError("alpha and beta are both zero")
    return IntensityField(x_field.region, alpha + beta * x_field.values)


def simulate_counts(field: IntensityField, k: float = 1.0, seed: int = 0, replicate: int = 0,
                    stream: int = Y_STREAM) -> CountField:
    """Draw independent Poisson cell counts with means ``k * lambda * cell_area``."""
    if not k > 0:
        raise ValueError(f"scale k must be positive, got {k}")
    rng = replicate_rng(seed, replicate, stream)
    counts = rng.poisson(k * field.cell_means)
    return CountField(field.region, counts, (int(seed), int(replicate)))


def aggregate_count(counts: CountField, zone: Zone) -> int:
    cells = np.asarray(zone.cells)
    if cells.max() >= counts.region.n_cells:
        raise OutOfBoundsError(f"zone {zone.id!r} outside the grid")
    return int(counts.counts[cells].sum())


def gini(counts) -> float:
    """Gini coefficient as mean absolute difference over twice the mean.

    ``sum_i sum_j |y_i - y_j| / (2 n sum_i y_i)``, evaluated in O(n log n)
    through the sorted-rank identity.
    """
    y = np.sort(np.asarray(getattr(counts, "counts", counts), dtype=float))
    total = y.sum()
    if total <= 0:
        raise AllZeroError("Gini coefficient needs a positive total")
    n = y.size
    ranks = 2.0 * np.arange(1, n + 1) - n - 1
    return float(np.sum(ranks * y) / (n * total))


def _read_cells(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["row", "col", "value"]:
            raise OutOfBoundsError(f"{path}: header must be row,col,value")
        for rec in reader:
            rows.append((int(rec["row"]), int(rec["col"]), float(rec["value"])))
    if not rows:
        raise OutOfBoundsError(f"{path}: no cells")
    n_rows = max(r for r, _, _ in rows) + 1
    n_cols = max(c for _, c, _ in rows) + 1
    return n_rows, n_cols, rows


def _fill(region: GridRegion, rows, path) -> np.ndarray:
    values = np.full(region.n_cells, np.nan)
    for r, c, v in rows:
        values[region.cell_index(r, c)] = v
    if np.any(np.isnan(values)):
        raise OutOfBoundsError(f"{path}: missing cells")
    return values


def read_intensity(path, cell_area: float = 1.0) -> IntensityField:
    n_rows, n_cols, rows = _read_cells(path)
    region = GridRegion(n_rows, n_cols, cell_area)
    return IntensityField(region, _fill(region, rows, path))


def read_counts(path, cell_area: float = 1.0) -> CountField:
    n_rows, n_cols, rows = _read_cells(path)
    region = GridRegion(n_rows, n_cols, cell_area)
    return CountField(region, _fill(region, rows, path))


def write_field(field, path) -> None:
    """Write an IntensityField or CountField as ``row,col,value`` in row-major order."""
    region = field.region
    values = field.counts if isinstance(field, CountField) else field.values
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "value"])
        for i, v in enumerate(values):
            r, c = region.row_col(i)
            w.writerow([r, c, int(v) if isinstance(field, CountField) else repr(float(v))])
