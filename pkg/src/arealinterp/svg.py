"""Standalone SVG heatmaps of per-cell values (presentation only)."""

from __future__ import annotations

from html import escape

import numpy as np

from .grid import GridRegion, ZoneSystem

# light yellow -> dark red
_RAMP = np.array([[255, 255, 204], [254, 217, 118], [253, 141, 60], [227, 26, 28], [128, 0, 38]], dtype=float)


def _color(t: float) -> str:
    t = min(max(t, 0.0), 1.0) * (len(_RAMP) - 1)
    i = min(int(t), len(_RAMP) - 2)
    c = _RAMP[i] + (t - i) * (_RAMP[i + 1] - _RAMP[i])
    return "#%02x%02x%02x" % tuple(int(round(v)) for v in c)


def heatmap_svg(values, region: GridRegion, title: str = "", cell_px: int = 24,
                outline: ZoneSystem | None = None) -> str:
    """Colour each cell by its value; optionally draw the borders of a zone system."""
    v = np.asarray(values, dtype=float)
    if v.shape != (region.n_cells,):
        raise ValueError(f"expected {region.n_cells} values, got {v.shape}")
    lo, hi = float(np.nanmin(v)), float(np.nanmax(v))
    span = hi - lo if hi > lo else 1.0
    top = 24 if title else 4
    w, h = region.n_cols * cell_px + 8, region.n_rows * cell_px + top + 22
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif">']
    if title:
        parts.append(f'<text x="4" y="16" font-size="13">{escape(title)}</text>')
    for i, val in enumerate(v):
        r, c = region.row_col(i)
        parts.append(f'<rect x="{4 + c * cell_px}" y="{top + r * cell_px}" width="{cell_px}" height="{cell_px}" '
                     f'fill="{_color((val - lo) / span)}"><title>{val:.6g}</title></rect>')
    if outline is not None:
        lab = outline.labels
        for i in range(region.n_cells):
            r, c = region.row_col(i)
            x, y = 4 + c * cell_px, top + r * cell_px
            if c + 1 < region.n_cols and lab[i] != lab[i + 1]:
                parts.append(f'<line x1="{x + cell_px}" y1="{y}" x2="{x + cell_px}" y2="{y + cell_px}" '
                             'stroke="black" stroke-width="2"/>')
            if r + 1 < region.n_rows and lab[i] != lab[i + region.n_cols]:
                parts.append(f'<line x1="{x}" y1="{y + cell_px}" x2="{x + cell_px}" y2="{y + cell_px}" '
                             'stroke="black" stroke-width="2"/>')
    parts.append(f'<text x="4" y="{h - 6}" font-size="11">min {lo:.4g}  max {hi:.4g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_heatmap(path, values, region: GridRegion, title: str = "", outline: ZoneSystem | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(heatmap_svg(values, region, title, outline=outline))


def zone_values_to_cells(system: ZoneSystem, zone_values) -> np.ndarray:
    """Spread zone totals over their cells as densities (value per cell)."""
    zone_values = np.asarray(zone_values, dtype=float)
    counts = np.bincount(system.labels, minlength=len(system))
    return (zone_values / counts)[system.labels]
