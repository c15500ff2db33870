"""Grid regions, zone systems and their intersections.

Every zone is a union of grid cells, so areas and overlaps are exact.
Cells are indexed row-major from 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    DuplicateZoneError,
    EmptyZoneError,
    NotAPartitionError,
    OutOfBoundsError,
    RegionMismatchError,
    ZeroAuxiliaryError,
)

ZONE_KINDS = ("source", "target", "control")


@dataclass(frozen=True)
class GridRegion:
    n_rows: int
    n_cols: int
    cell_area: float = 1.0

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise OutOfBoundsError(f"grid must be at least 1x1, got {self.n_rows}x{self.n_cols}")
        if not self.cell_area > 0:
            raise OutOfBoundsError(f"cell_area must be positive, got {self.cell_area}")

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def area(self) -> float:
        return self.n_cells * self.cell_area

    def cell_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.n_rows and 0 <= col < self.n_cols):
            raise OutOfBoundsError(f"cell ({row}, {col}) outside {self.n_rows}x{self.n_cols} grid")
        return row * self.n_cols + col

    def row_col(self, index: int) -> tuple[int, int]:
        return divmod(index, self.n_cols)


@dataclass(frozen=True)
class Zone:
    id: str
    cells: tuple[int, ...]

    def __post_init__(self):
        if len(self.cells) == 0:
            raise EmptyZoneError(f"zone {self.id!r} has no cells")
        object.__setattr__(self, "cells", tuple(sorted(int(c) for c in self.cells)))

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def area(self, region: GridRegion) -> float:
        return self.n_cells * region.cell_area


@dataclass(frozen=True)
class ZoneSystem:
    region: GridRegion
    zones: tuple[Zone, ...]
    kind: str = "source"
    labels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ZONE_KINDS:
            raise ValueError(f"kind must be one of {ZONE_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "zones", tuple(self.zones))
        ids = [z.id for z in self.zones]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DuplicateZoneError(f"duplicate zone ids: {dupes}")
        labels = np.full(self.region.n_cells, -1, dtype=np.int64)
        for k, zone in enumerate(self.zones):
            cells = np.asarray(zone.cells)
            if cells.min() < 0 or cells.max() >= self.region.n_cells:
                raise OutOfBoundsError(f"zone {zone.id!r} has cells outside the grid")
            if np.any(labels[cells] >= 0):
                raise NotAPartitionError(f"zone {zone.id!r} overlaps another zone")
            labels[cells] = k
        if np.any(labels < 0):
            missing = np.flatnonzero(labels < 0)
            raise NotAPartitionError(f"{missing.size} cells not covered, first {missing[:5].tolist()}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.zones)

    @property
    def ids(self) -> list[str]:
        return [z.id for z in self.zones]

    @property
    def areas(self) -> np.ndarray:
        return np.array([z.area(self.region) for z in self.zones])

    def index(self, zone_id: str) -> int:
        return self.ids.index(zone_id)

    def aggregate(self, values: np.ndarray) -> np.ndarray:
        """Sum per-cell values (last axis) over each zone."""
        values = np.asarray(values)
        onehot = self.membership()
        return values @ onehot

    def membership(self) -> np.ndarray:
        """Cell-by-zone 0/1 matrix."""
        m = np.zeros((self.region.n_cells, len(self.zones)))
        m[np.arange(self.region.n_cells), self.labels] = 1.0
        return m


def build_zone_system(region: GridRegion, assignment: Sequence[str], kind: str = "source") -> ZoneSystem:
    """Build a partition from per-cell labels; zones are ordered by first appearance."""
    if len(assignment) != region.n_cells:
        raise OutOfBoundsError(f"expected {region.n_cells} labels, got {len(assignment)}")
    cells: dict[str, list[int]] = {}
    for i, label in enumerate(assignment):
        label = str(label)
        if label == "":
            raise EmptyZoneError(f"cell {i} has an empty label")
        cells.setdefault(label, []).append(i)
    zones = tuple(Zone(label, tuple(c)) for label, c in cells.items())
    return ZoneSystem(region, zones, kind)


def cells_system(region: GridRegion, kind: str = "target") -> ZoneSystem:
    """One zone per cell, ids ``r<row>c<col>``."""
    labels = [f"r{r}c{c}" for r in range(region.n_rows) for c in range(region.n_cols)]
    return build_zone_system(region, labels, kind)


def read_labels(path, cell_area: float = 1.0, kind: str = "source") -> ZoneSystem:
    """Read a ``row,col,label`` CSV into a zone system."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["row", "col", "label"]:
            raise OutOfBoundsError(f"{path}: header must be row,col,label")
        for rec in reader:
            rows.append((int(rec["row"]), int(rec["col"]), rec["label"].strip()))
    if not rows:
        raise OutOfBoundsError(f"{path}: no cells")
    n_rows = max(r for r, _, _ in rows) + 1
    n_cols = max(c for _, c, _ in rows) + 1
    region = GridRegion(n_rows, n_cols, cell_area)
    labels: list[str | None] = [None] * region.n_cells
    for r, c, label in rows:
        i = region.cell_index(r, c)
        if labels[i] is not None:
            raise DuplicateZoneError(f"{path}: cell ({r}, {c}) listed twice")
        labels[i] = label
    if any(lab is None for lab in labels):
        raise NotAPartitionError(f"{path}: not every cell is labelled")
    return build_zone_system(region, labels, kind)


def write_labels(system: ZoneSystem, path) -> None:
    region = system.region
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "label"])
        for i in range(region.n_cells):
            r, c = region.row_col(i)
            w.writerow([r, c, system.zones[system.labels[i]].id])


@dataclass(frozen=True)
class IntersectionTable:
    """Nonempty source x target overlaps with their areas and auxiliary sums.

    Arrays are aligned by entry; ``aux`` has shape (n_entries, p).
    """

    sources: ZoneSystem
    targets: ZoneSystem
    src: np.ndarray
    tgt: np.ndarray
    cells: tuple[tuple[int, ...], ...]
    area: np.ndarray
    aux: np.ndarray

    def __len__(self):
        return len(self.src)

    @property
    def n_aux(self) -> int:
        return self.aux.shape[1]

    @property
    def entries(self) -> list[tuple]:
        sid, tid = self.sources.ids, self.targets.ids
        return [
            (sid[s], tid[t], cells, float(a), tuple(float(v) for v in x))
            for s, t, cells, a, x in zip(self.src, self.tgt, self.cells, self.area, self.aux)
        ]

    @property
    def cell_entry(self) -> np.ndarray:
        """Entry index of every grid cell."""
        out = np.empty(self.sources.region.n_cells, dtype=np.int64)
        for k, cells in enumerate(self.cells):
            out[list(cells)] = k
        return out

    def source_area(self) -> np.ndarray:
        return np.bincount(self.src, weights=self.area, minlength=len(self.sources))

    def source_aux(self) -> np.ndarray:
        out = np.zeros((len(self.sources), self.n_aux))
        np.add.at(out, self.src, self.aux)
        return out

    def to_source(self, values: np.ndarray) -> np.ndarray:
        """Sum entry-level values (last axis) to sources."""
        return np.asarray(values) @ self._onehot(self.src, len(self.sources))

    def to_target(self, values: np.ndarray) -> np.ndarray:
        """Sum entry-level values (last axis) to targets."""
        return np.asarray(values) @ self._onehot(self.tgt, len(self.targets))

    @staticmethod
    def _onehot(idx, n):
        m = np.zeros((len(idx), n))
        m[np.arange(len(idx)), idx] = 1.0
        return m


def _cell_values(field_or_array, region: GridRegion) -> np.ndarray:
    values = getattr(field_or_array, "counts", None)
    if values is None:
        values = getattr(field_or_array, "values", field_or_array)
    values = np.asarray(values, dtype=float)
    if values.shape != (region.n_cells,):
        raise RegionMismatchError(f"field has {values.shape} cells, grid has {region.n_cells}")
    return values


def intersect(sources: ZoneSystem, targets: ZoneSystem, aux: Iterable = ()) -> IntersectionTable:
    if sources.region != targets.region:
        raise RegionMismatchError("source and target systems live on different grids")
    region = sources.region
    aux_cells = [_cell_values(a, region) for a in aux]
    pair = sources.labels * len(targets) + targets.labels
    # sorted keys give source-major, then target order
    keys = np.unique(pair)
    src = keys // len(targets)
    tgt = keys % len(targets)
    cells = tuple(tuple(np.flatnonzero(pair == k).tolist()) for k in keys)
    area = np.array([len(c) for c in cells], dtype=float) * region.cell_area
    if aux_cells:
        aux_arr = np.array([[a[list(c)].sum() for a in aux_cells] for c in cells])
    else:
        aux_arr = np.zeros((len(cells), 0))
    return IntersectionTable(sources, targets, src, tgt, cells, area, aux_arr)


def nesting_check(sources: ZoneSystem, targets: ZoneSystem) -> dict:
    """Report whether every target lies inside exactly one source."""
    if sources.region != targets.region:
        raise RegionMismatchError("source and target systems live on different grids")
    violations = []
    for k, zone in enumerate(targets.zones):
        owners = np.unique(sources.labels[list(zone.cells)])
        if owners.size != 1:
            violations.append(zone.id)
    return {"nested": not violations, "violations": violations}


@dataclass(frozen=True)
class GeometryStats:
    source_id: str
    p: np.ndarray
    q: np.ndarray
    D: float
    B: float
    C: float


def stats_from_shares(p, q, source_id: str = "") -> GeometryStats:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    D = float(np.sum((p - q) ** 2))
    B = float(1.0 - np.sum(q**2))
    C = float(1.0 - np.sum(p**2))
    return GeometryStats(source_id, p, q, D, B, C)


def geometry_stats(source: Zone, nested_targets: Sequence[Zone], x, region: GridRegion | None = None) -> GeometryStats:
    """Area shares, auxiliary shares and the D, B, C summaries of one source."""
    if region is None:
        region = getattr(x, "region")
    xs = _cell_values(x, region)
    covered = sorted(c for t in nested_targets for c in t.cells)
    if covered != list(source.cells):
        raise NotAPartitionError(f"targets do not partition source {source.id!r}")
    x_s = xs[list(source.cells)].sum()
    if x_s <= 0:
        raise ZeroAuxiliaryError(f"auxiliary total of source {source.id!r} is zero")
    p = np.array([t.n_cells / source.n_cells for t in nested_targets])
    q = np.array([xs[list(t.cells)].sum() / x_s for t in nested_targets])
    return stats_from_shares(p, q, source.id)


def intersection_system(sources: ZoneSystem, targets: ZoneSystem) -> ZoneSystem:
    """The nonempty overlaps as a zone system of their own, ids ``"<source>&<target>"``.

    Every overlap lies in exactly one source, so this refinement is always nested.
    """
    table = intersect(sources, targets)
    sid, tid = sources.ids, targets.ids
    zones = tuple(Zone(f"{sid[s]}&{tid[t]}", cells) for s, t, cells in zip(table.src, table.tgt, table.cells))
    return ZoneSystem(sources.region, zones, "target")
