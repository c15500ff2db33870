"""Shared fixtures: the 1x4 reference design and randomized nested designs."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import pytest

from arealinterp.aim import AimParams
from arealinterp.field import CountField
from arealinterp.grid import GridRegion, ZoneSystem, build_zone_system


@dataclass
class Fixture:
    region: GridRegion
    sources: ZoneSystem
    targets: ZoneSystem
    x: CountField
    params: AimParams


def reference_design() -> Fixture:
    """One source of 4 cells; T1 = first cell (x=30), T2 = the other three (x=10); alpha=2, beta=0.5."""
    region = GridRegion(1, 4)
    sources = build_zone_system(region, ["S"] * 4, "source")
    targets = build_zone_system(region, ["T1", "T2", "T2", "T2"], "target")
    x = CountField(region, np.array([30, 4, 3, 3]))
    return Fixture(region, sources, targets, x, AimParams(2.0, (0.5,)))


@pytest.fixture
def ref_design() -> Fixture:
    return reference_design()


def random_nested(rng: np.random.Generator, max_sources: int = 3, max_cells: int = 6,
                  x_high: int = 60, positive_x: bool = True) -> Fixture:
    """Row of cells cut into contiguous sources, each cut into contiguous nested targets."""
    n_src = int(rng.integers(1, max_sources + 1))
    src_labels, tgt_labels = [], []
    for s in range(n_src):
        n = int(rng.integers(2, max_cells + 1))
        cuts = np.sort(rng.choice(np.arange(1, n), size=int(rng.integers(1, n)), replace=False))
        bounds = [0, *cuts.tolist(), n]
        for t in range(len(bounds) - 1):
            for _ in range(bounds[t], bounds[t + 1]):
                src_labels.append(f"S{s}")
                tgt_labels.append(f"S{s}T{t}")
    region = GridRegion(1, len(src_labels), float(rng.choice([1.0, 0.5, 2.0])))
    sources = build_zone_system(region, src_labels, "source")
    targets = build_zone_system(region, tgt_labels, "target")
    low = 1 if positive_x else 0
    x = CountField(region, rng.integers(low, x_high, size=region.n_cells))
    alpha = float(rng.uniform(0.1, 20.0))
    beta = float(rng.uniform(0.05, 2.0))
    return Fixture(region, sources, targets, x, AimParams(alpha, (beta,)))


def random_crossing(rng: np.random.Generator, n_rows: int = 3, n_cols: int = 4) -> Fixture:
    """Random (generally non-nested) source and target partitions of a small grid."""
    region = GridRegion(n_rows, n_cols)
    n = region.n_cells
    while True:
        s = rng.integers(0, 3, size=n)
        t = rng.integers(0, 4, size=n)
        if len(np.unique(s)) >= 2 and len(np.unique(t)) >= 2:
            break
    sources = build_zone_system(region, [f"S{v}" for v in s], "source")
    targets = build_zone_system(region, [f"T{v}" for v in t], "target")
    x = CountField(region, rng.integers(1, 40, size=n))
    return Fixture(region, sources, targets, x, AimParams(float(rng.uniform(0.5, 10)), (float(rng.uniform(0.1, 2)),)))


def nested_zones(fx: Fixture):
    """Pairs (source zone, list of its nested target zones)."""
    out = []
    for sz in fx.sources.zones:
        cells = set(sz.cells)
        out.append((sz, [tz for tz in fx.targets.zones if set(tz.cells) <= cells]))
    return out


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion, printed at the end of the run

ACCEPTANCE: dict[str, str] = {}


def report_criterion(key: str, passed: bool, detail: str) -> str:
    line = f"CRITERION {key}: {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE[key] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(re.match(r"\d+", k).group()), k)):
        terminalreporter.write_line(ACCEPTANCE[key])
