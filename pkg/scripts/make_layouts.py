"""Regenerate the zone layouts and auxiliary intensity surfaces shipped with the package.

Run from the repository root:  python3 scripts/make_layouts.py
Everything is deterministic; the written CSVs are what the default configs use.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from arealinterp.field import IntensityField, gini, write_field
from arealinterp.grid import GridRegion, build_zone_system, write_labels

OUT = Path(__file__).resolve().parents[1] / "src" / "arealinterp" / "layouts"


def toy1():
    region = GridRegion(5, 5)
    src = ["S1"] * 25
    for c in (4, 9, 14, 19, 24, 23):
        src[c] = "S2"
    for c in (10, 11, 12, 13, 15, 16, 17, 18, 20, 21, 22):
        src[c] = "S3"
    targets = {
        "T6": (0, 1), "T2": (5, 10, 15), "T3": (6, 11), "T7": (2, 3, 7, 8, 12, 13),
        "T1": (4, 9, 14, 17, 18), "T4": (16, 19, 20, 21), "T5": (22, 23, 24),
    }
    tgt = [""] * 25
    for name in ("T1", "T2", "T3", "T4", "T5", "T6", "T7"):
        for c in targets[name]:
            tgt[c] = name
    x = np.zeros(25)
    x[[0, 1]] = 63.0
    x[5] = 139.0
    x[6] = 65.0
    x[[2, 3, 7, 8]] = 48.5
    x[[4, 9, 14]] = 31.0
    x[19] = 73.0
    x[[23, 24]] = 16.5
    s3 = {17: 23.35, 18: 23.35, 10: 1.75, 15: 1.75, 11: 55.0, 16: 20.4, 20: 20.4, 21: 20.4,
          22: 81.0, 12: 13.25, 13: 13.25}
    scale = 288.0 / sum(s3.values())
    for c, v in s3.items():
        x[c] = v * scale
    write_labels(build_zone_system(region, src, "source"), OUT / "toy1_sources.csv")
    write_labels(build_zone_system(region, tgt, "target"), OUT / "toy1_targets.csv")
    write_field(IntensityField(region, x), OUT / "toy1_x.csv")


def _blocks(n_rows, n_cols, spec):
    labels = [""] * (n_rows * n_cols)
    for name, (r0, r1, c0, c1) in spec.items():
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                labels[r * n_cols + c] = name
    assert all(labels), "layout leaves cells unassigned"
    return labels


# nested hierarchy: every 14-system source lies in one 7-system source, which lies in one 4-system source
SYSTEM_14 = {
    "A1": (0, 3, 0, 4), "A2": (0, 3, 5, 8), "B1": (4, 7, 0, 3), "B2": (4, 7, 4, 8),
    "C1": (0, 4, 9, 11), "C2": (5, 7, 9, 11), "D1": (0, 2, 12, 15), "D2": (3, 7, 12, 15),
    "E1": (8, 10, 0, 5), "E2": (11, 15, 0, 5), "F1": (8, 11, 6, 10), "F2": (8, 11, 11, 15),
    "G1": (12, 15, 6, 12), "G2": (12, 15, 13, 15),
}
MERGE_7 = {"A": ("A1", "A2"), "B": ("B1", "B2"), "C": ("C1", "C2"), "D": ("D1", "D2"),
           "E": ("E1", "E2"), "F": ("F1", "F2"), "G": ("G1", "G2")}
MERGE_4 = {"N": ("A", "B"), "E": ("C", "D"), "W": ("E",), "S": ("F", "G")}


def _bumps(rng, region, n_bumps, width):
    rr, cc = np.divmod(np.arange(region.n_cells), region.n_cols)
    field = np.zeros(region.n_cells)
    for _ in range(n_bumps):
        r0, c0 = rng.uniform(-1, region.n_rows), rng.uniform(-1, region.n_cols)
        field += rng.uniform(0.5, 1.5) * np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2 * width**2))
    return field


def toy2():
    region = GridRegion(16, 16)
    l14 = _blocks(16, 16, SYSTEM_14)
    to7 = {child: parent for parent, kids in MERGE_7.items() for child in kids}
    to4 = {child: parent for parent, kids in MERGE_4.items() for child in kids}
    l7 = [to7[v] for v in l14]
    l4 = [to4[v] for v in l7]
    for name, labels in (("14", l14), ("7", l7), ("4", l4)):
        write_labels(build_zone_system(region, labels, "source"), OUT / f"toy2_sources_{name}.csv")

    total, n_high, low = 100_000.0, 62, 4.0
    high = low + (total - region.n_cells * low) / n_high

    # seed picked once so the 14-source imbalance spread resembles the published summary
    # (alpha=100, beta=1: min about -0.9, mean about -0.4, max about 0.9)
    f1 = _bumps(np.random.default_rng(103), region, 12, 1.0)
    mask1 = np.argsort(-f1, kind="stable")[:n_high]
    x1 = np.full(region.n_cells, low)
    x1[mask1] = high
    # X3: a smooth surface chosen among a few deterministic candidates for a weak negative
    # correlation with X1
    best = None
    for seed in range(200):
        g = _bumps(np.random.default_rng(seed), region, 8, 2.5)
        x3 = g / g.sum() * total
        corr = np.corrcoef(x1, x3)[0, 1]
        if best is None or abs(corr + 0.16) < abs(best[0] + 0.16):
            best = (corr, seed, x3)
    corr, seed3, x3 = best
    x2 = np.full(region.n_cells, total / region.n_cells)
    write_field(IntensityField(region, x1), OUT / "toy2_x1.csv")
    write_field(IntensityField(region, x2), OUT / "toy2_x2.csv")
    write_field(IntensityField(region, x3), OUT / "toy2_x3.csv")
    print(f"X1 gini (intensity) {gini(x1):.3f}; X3 gini {gini(x3):.3f}; corr(X1, X3) {corr:.3f} (seed {seed3})")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    toy1()
    toy2()
    print(f"layouts written to {OUT}")
