"""Closed-form prediction errors under the auxiliary-information model.

Notation: for a target ``T`` nested in source ``S``, ``p = |T|/|S|`` and
``q = x_T/x_S`` are the area and auxiliary shares, ``lam_A = alpha|A| + beta x_A``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aim import AimParams, EffectDecomposition, PiecewiseModel, decompose_effects, piecewise_intensity
from .exceptions import NotAPartitionError, NotNestedError, TargetStraddlesControlError, ZeroAuxiliaryError
from .grid import GeometryStats, GridRegion, IntersectionTable, Zone, _cell_values, geometry_stats


@dataclass(frozen=True)
class AnalyticError:
    scope: str
    scope_id: str
    method: str
    bias: float
    variance: float
    mse: float
    relative: float
    expected: float

    @classmethod
    def from_moments(cls, scope, scope_id, method, bias, variance, expected):
        mse = bias**2 + variance
        rel = np.sqrt(mse) / expected if expected > 0 else float("nan")
        return cls(scope, scope_id, method, float(bias), float(variance), float(mse), float(rel), float(expected))


def proportional_moments(weight, lam_target, lam_source):
    """Bias and variance of ``w Y_S - Y_T`` for a fixed weight, ``T`` inside ``S``.

    Uses only ``Cov(Y_S, Y_T) = Var(Y_T) = lam_T``; valid for any intensity.
    """
    w = np.asarray(weight, dtype=float)
    bias = w * lam_source - lam_target
    var = w**2 * lam_source + lam_target - 2.0 * w * lam_target
    return bias, var


def daw_dax_moments(params: AimParams, t_area, s_area, x_t, x_s) -> dict:
    """Bias and variance of the areal-weighting and dasymetric predictors on one target."""
    a, b = params.alpha, params.beta
    if np.any(np.asarray(x_s) <= 0):
        raise ZeroAuxiliaryError("auxiliary source total must be positive")
    p = np.asarray(t_area, dtype=float) / s_area
    q = np.asarray(x_t, dtype=float) / x_s
    common = b * x_t * (1 - q) + a * t_area * (1 - p)
    return {
        "bias_daw": b * x_s * (p - q),
        "bias_dax": a * s_area * (q - p),
        "var_daw": b * x_s * (p - q) ** 2 + common,
        "var_dax": a * s_area * (p - q) ** 2 + common,
    }


def _zone_sums(zone: Zone, x, region: GridRegion):
    xs = _cell_values(x, region)
    return zone.area(region), float(xs[list(zone.cells)].sum())


def _require_nested(source: Zone, target: Zone):
    if not set(target.cells) <= set(source.cells):
        raise NotNestedError(f"target {target.id!r} is not inside source {source.id!r}")


def bias_variance_daw_dax(params: AimParams, source: Zone, target: Zone, x, region: GridRegion | None = None):
    region = region or x.region
    _require_nested(source, target)
    s_area, x_s = _zone_sums(source, x, region)
    t_area, x_t = _zone_sums(target, x, region)
    m = daw_dax_moments(params, t_area, s_area, x_t, x_s)
    lam_t = params.alpha * t_area + params.beta * x_t
    return (
        AnalyticError.from_moments("target", target.id, "DAW", m["bias_daw"], m["var_daw"], lam_t),
        AnalyticError.from_moments("target", target.id, "DAX", m["bias_dax"], m["var_dax"], lam_t),
    )


def source_variances_from_stats(params: AimParams, stats: GeometryStats, s_area: float, x_s: float) -> tuple[float, float]:
    a, b = params.alpha, params.beta
    var_daw = b * x_s * stats.D + b * x_s * stats.B + a * s_area * stats.C
    var_dax = a * s_area * stats.D + b * x_s * stats.B + a * s_area * stats.C
    return var_daw, var_dax


def source_variances(params: AimParams, source: Zone, targets: Sequence[Zone], x, region: GridRegion | None = None):
    """Source-level prediction variances of DAW and DAX."""
    region = region or x.region
    stats = geometry_stats(source, targets, x, region)
    s_area, x_s = _zone_sums(source, x, region)
    return source_variances_from_stats(params, stats, s_area, x_s)


def source_errors_from_shares(effects: EffectDecomposition, stats: GeometryStats) -> dict:
    """Source errors of DAW and DAX written through the effect shares and D, B, C."""
    E, ix, ia = effects.expected, effects.i_aux, effects.i_area
    D, B, C = stats.D, stats.B, stats.C
    er_daw = ix**2 * E**2 * D + ix * E * (D + B) + ia * E * C
    er_dax = ia**2 * E**2 * D + ia * E * (D + C) + ix * E * B
    return {
        "er_daw": er_daw,
        "er_dax": er_dax,
        "re2_daw": ix**2 * D + (ix * (D + B - C) + C) / E,
        "re2_dax": ia**2 * D + (ia * (D - B + C) + B) / E,
    }


def relative_error_difference(effects: EffectDecomposition, stats: GeometryStats) -> float:
    """``Re_DAW^2 - Re_DAX^2 = -D * Delta * (1 + 1/E)``."""
    return -stats.D * effects.delta * (1.0 + 1.0 / effects.expected)


def relative_error_ratio_approx(effects: EffectDecomposition) -> float:
    """Large-count limit of ``Re_DAW / Re_DAX``."""
    return effects.i_aux / effects.i_area


def error_difference(params: AimParams, t_area, s_area, x_t, x_s) -> float:
    """``Er_DAW - Er_DAX`` on a nested target.

    Equals ``-(p - q)^2 Delta_S E (E + 1)``: positive (dasymetric wins) exactly
    when the auxiliary effect dominates the source (``Delta_S < 0``).
    """
    d = t_area / s_area - x_t / x_s
    a_s, b_s = params.alpha * s_area, params.beta * x_s
    return d**2 * (b_s - a_s) * (a_s + b_s + 1.0)


def composite_target_error(lam_t, lam_s):
    return lam_t * (lam_s - lam_t) / lam_s


def composite_source_error(lam_targets, lam_s) -> float:
    lam_targets = np.asarray(lam_targets, dtype=float)
    return float(lam_s - np.sum(lam_targets**2) / lam_s)


def composite_relative_error_sq(effects: EffectDecomposition, stats: GeometryStats) -> float:
    """``(Re_S^C)^2`` in terms of the imbalance and D, B, C.

    ``(-Delta^2 D + 2 Delta (C - B) + D + 2B + 2C) / (4 E)``.
    """
    dl, D, B, C = effects.delta, stats.D, stats.B, stats.C
    return (-(dl**2) * D + 2 * dl * (C - B) + D + 2 * B + 2 * C) / (4.0 * effects.expected)


def composite_error(params: AimParams, source: Zone, targets: Sequence[Zone], x=None,
                    region: GridRegion | None = None) -> dict:
    """Target-level and source-level errors of the composite predictor."""
    if x is not None:
        region = region or x.region
    lam = []
    for t in targets:
        _require_nested(source, t)
        t_area = t.area(region)
        xt = _zone_sums(t, x, region)[1] if params.p else 0.0
        lam.append(params.alpha * t_area + (params.beta * xt if params.p else 0.0))
    lam = np.array(lam)
    lam_s = lam.sum()
    if sorted(c for t in targets for c in t.cells) != list(source.cells):
        raise NotAPartitionError(f"targets do not partition source {source.id!r}")
    per_target = [
        AnalyticError.from_moments("target", t.id, "COMPOSITE", 0.0, composite_target_error(lt, lam_s), lt)
        for t, lt in zip(targets, lam)
    ]
    src = AnalyticError.from_moments("source", source.id, "COMPOSITE", 0.0, composite_source_error(lam, lam_s), lam_s)
    return {"targets": per_target, "source": src}


def piecewise_errors(model: PiecewiseModel, source: Zone, targets: Sequence[Zone]) -> dict:
    """DAW errors under a piecewise-homogeneous intensity, by reduction to the general moments."""
    cz = model.control_zones
    field = piecewise_intensity(model)
    lam_s = field.expected(source)
    per_target = []
    for t in targets:
        _require_nested(source, t)
        owners = np.unique(cz.labels[list(t.cells)])
        if owners.size != 1:
            raise TargetStraddlesControlError(f"target {t.id!r} crosses control zones")
        lam_t = field.expected(t)
        bias, var = proportional_moments(t.n_cells / source.n_cells, lam_t, lam_s)
        per_target.append(AnalyticError.from_moments("target", t.id, "DAW", bias, var, lam_t))
    total_mse = sum(e.mse for e in per_target)
    total_var = sum(e.variance for e in per_target)
    src = AnalyticError("source", source.id, "DAW", 0.0, float(total_var), float(total_mse),
                        float(np.sqrt(total_mse) / lam_s), float(lam_s))
    return {"targets": per_target, "source": src}


def reg_error_approximations(effects: EffectDecomposition, stats: GeometryStats) -> dict:
    """Large-count approximations for the regression predictor at source level."""
    return {
        "re_reg": 1.0 / np.sqrt(effects.expected),
        "diff_vs_daw": -((1.0 + effects.delta) ** 2) * stats.D,
        "diff_vs_dax": -((1.0 - effects.delta) ** 2) * stats.D,
    }


def proportional_entry_moments(weights, table: IntersectionTable, lam_entries):
    """Bias and variance per intersection for ``Y_hat_st = w_st Y_s``."""
    lam_entries = np.asarray(lam_entries, dtype=float)
    lam_s = table.to_source(lam_entries)[table.src]
    return proportional_moments(weights, lam_entries, lam_s)


def proportional_target_moments(weights, table: IntersectionTable, lam_entries):
    """Target-level bias and variance for fixed-weight predictors, nested or not.

    Sources are independent, so both moments add over a target's intersections.
    """
    bias, var = proportional_entry_moments(weights, table, lam_entries)
    return table.to_target(bias), table.to_target(var)


def effects_for_source(params: AimParams, source: Zone, x, region: GridRegion | None = None) -> EffectDecomposition:
    region = region or x.region
    s_area, x_s = _zone_sums(source, x, region)
    return decompose_effects(params, s_area, x_s, source.id)


def entry_expectations(params: AimParams, table: IntersectionTable, aux_index=None, scale: float = 1.0) -> np.ndarray:
    """``E(Y_st) = k (alpha |A_st| + beta' x_st)`` for every intersection."""
    idx = list(range(params.p)) if aux_index is None else list(aux_index)
    return scale * (params.alpha * table.area + table.aux[:, idx] @ np.asarray(params.betas))


def proportional_report(method: str, weights, table: IntersectionTable, lam_entries) -> list[AnalyticError]:
    """Target, source (nested targets only) and region errors of ``Y_hat_st = w_st Y_s``.

    Aggregated scopes sum the target MSEs; their ``bias`` is the root-sum-square
    of target biases so that ``mse = bias**2 + variance`` still holds.
    """
    bias, var = proportional_target_moments(weights, table, lam_entries)
    lam_t = table.to_target(np.asarray(lam_entries, dtype=float))
    tids = table.targets.ids
    out = [AnalyticError.from_moments("target", tids[t], method, bias[t], var[t], lam_t[t]) for t in range(len(tids))]

    def pooled(scope, scope_id, sel):
        b2 = float(np.sum(bias[sel] ** 2))
        return AnalyticError.from_moments(scope, scope_id, method, np.sqrt(b2), float(np.sum(var[sel])),
                                          float(np.sum(lam_t[sel])))

    owners = [np.unique(table.src[table.tgt == t]) for t in range(len(tids))]
    if all(o.size == 1 for o in owners):
        t_src = np.array([o[0] for o in owners])
        for s, sid in enumerate(table.sources.ids):
            out.append(pooled("source", sid, t_src == s))
    out.append(pooled("region", "region", np.ones(len(tids), dtype=bool)))
    return out


REPORT_HEADER = ["scope", "scope_id", "method", "bias", "variance", "mse", "relative", "std_error", "replicates"]


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{float(v):.10g}"


def write_error_report(rows, path) -> None:
    """ErrorReport CSV for analytic (no standard error) or Monte-Carlo rows."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in rows:
            mse = getattr(r, "mse", None)
            if mse is None:
                mse = r.mse_hat
            rel = getattr(r, "relative", None)
            if rel is None:
                rel = r.relative_hat
            w.writerow([r.scope, r.scope_id, r.method, _fmt(r.bias), _fmt(r.variance), _fmt(mse), _fmt(rel),
                        _fmt(getattr(r, "std_error", None)), getattr(r, "replicates", 0)])
