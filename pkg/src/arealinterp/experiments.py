"""Simulation studies: two toy designs, a model-robustness check and an asymptotic sweep.

Each ``run_*`` takes an :class:`ExperimentConfig`, writes CSV tables into
``config.output_dir`` and returns the written paths. Output depends only on
the config (including ``base_seed``), so reruns produce identical bytes.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .aim import AimParams, imbalance_table
from .config import ExperimentConfig, ResponseSpec
from .error_analysis import entry_expectations, proportional_report
from .exceptions import ConfigError, NumericalError
from .field import CountField, gini, replicate_rng
from .grid import IntersectionTable, ZoneSystem, intersect, intersection_system
from .interpolators import (
    daw_weights,
    dax_weights,
    linear_weights,
    predict_composite,
    predict_daw,
    predict_dax,
    predict_reg,
    predict_scr,
)
from .montecarlo import MethodSpec, Scenario, mc_evaluate
from .regression import Design, design_from_table, fit, standardized_estimator
from .svg import write_heatmap, zone_values_to_cells

log = logging.getLogger(__name__)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if np.isnan(v) else f"{v:.10g}"


def _write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _aux_indices(cfg: ExperimentConfig, resp: ResponseSpec) -> list[int]:
    return [cfg.aux_index(n) for n in resp.auxiliary]


def _method_specs(names, aux_idx) -> list[MethodSpec]:
    out = []
    for name in names:
        if name == "DAX":
            if not aux_idx:
                log.info("DAX skipped: response has no auxiliary variable")
                continue
            out.append(MethodSpec("DAX", (aux_idx[0],), "DAX"))
        elif name in ("REG", "SCR"):
            out.append(MethodSpec(name, tuple(aux_idx), name))
        else:
            out.append(MethodSpec(name))
    return out


def _analytic_weights(spec: MethodSpec, table: IntersectionTable, params: AimParams, aux_idx):
    if spec.kind == "DAW":
        return daw_weights(table)
    if spec.kind == "DAX":
        return dax_weights(table, spec.aux[0])
    if spec.kind == "COMPOSITE":
        return linear_weights(params.gamma, table, list(aux_idx))
    return None


def analytic_region(spec: MethodSpec, table: IntersectionTable, params: AimParams, aux_idx, scale: float = 1.0):
    """Closed-form errors for the fixed-weight methods; ``None`` for REG/SCR."""
    w = _analytic_weights(spec, table, params, aux_idx)
    if w is None:
        return None
    lam = entry_expectations(params, table, aux_idx, scale)
    return proportional_report(spec.label, w, table, lam)


def _region(report):
    return next(e for e in report if e.scope == "region")


def _sqrt_se(mse: float, se: float) -> float:
    return se / (2.0 * np.sqrt(mse)) if mse > 0 else float("nan")


def _check_replicates(cfg: ExperimentConfig):
    if cfg.replicates < 1:
        raise ConfigError("replicates must be at least 1")


# ---------------------------------------------------------------------------
# optional figures


def _draw_figures(out: Path, tag: str, sources: ZoneSystem, targets: ZoneSystem, aux: list[CountField],
                  resp: ResponseSpec, aux_idx, methods, seed: int) -> None:
    """Heatmaps of the auxiliary counts, replicate 0 of Y and each method's predictions for it."""
    out.mkdir(parents=True, exist_ok=True)
    region = sources.region
    params = resp.params
    mean = params.alpha * region.cell_area + sum(b * aux[j].counts for b, j in zip(params.betas, aux_idx))
    y = replicate_rng(seed, 0).poisson(np.broadcast_to(mean, (region.n_cells,))).astype(float)
    table = intersect(sources, targets, aux)
    y_src = sources.aggregate(y)
    for j, a in enumerate(aux):
        write_heatmap(out / f"aux_{j}.svg", a.counts, region, f"auxiliary {j}", outline=sources)
    write_heatmap(out / f"{tag}_y.svg", y, region, f"{tag}: one draw of Y", outline=sources)
    for m in methods:
        try:
            if m.kind == "DAW":
                pred = predict_daw(y_src, table)
            elif m.kind == "DAX":
                pred = predict_dax(y_src, table, m.aux[0])
            elif m.kind == "COMPOSITE":
                pred = predict_composite(params, y_src, table, list(aux_idx))
            else:
                res = fit(design_from_table(table, y_src, m.aux))
                pred = predict_reg(res, table, m.aux) if m.kind == "REG" else predict_scr(res, y_src, table, m.aux)
        except NumericalError as exc:
            log.warning("figure for %s skipped: %s", m.label, exc)
            continue
        cells = zone_values_to_cells(targets, pred.target_values)
        name = m.label.replace("[", "_").replace("]", "").replace(",", "_")
        write_heatmap(out / f"{tag}_{name}.svg", cells, region, f"{tag}: {m.label} prediction", outline=targets)


# ---------------------------------------------------------------------------
# toy 1


def run_toy1(cfg: ExperimentConfig, svg: bool = False) -> dict:
    """Small non-nested design, conditional on one auxiliary draw.

    Errors are evaluated on the intersections (every intersection lies in one
    source), which is the level the overall regional error sums over.
    """
    _check_replicates(cfg)
    out = Path(cfg.output_dir)
    sources = next(iter(cfg.source_systems().values()))
    targets = cfg.target_system()
    aux = cfg.realize_auxiliary()
    inter = intersection_system(sources, targets)
    table_i = intersect(sources, inter, aux)
    a2t = np.array([targets.labels[z.cells[0]] for z in inter.zones])
    to_target = np.zeros((len(inter), len(targets)))
    to_target[np.arange(len(inter)), a2t] = 1.0
    table_t = intersect(sources, targets, aux)

    rows1, rows2, rows3 = [], [], []
    for resp in cfg.params:
        aux_idx = _aux_indices(cfg, resp)
        methods = _method_specs(cfg.methods, aux_idx)
        sc = Scenario(sources, inter, resp.params, methods, cfg.replicates, cfg.base_seed,
                      aux=aux, aux_index=aux_idx)
        res = mc_evaluate(sc, workers=cfg.workers)
        for m in methods:
            reg = res.get(m.label, "region")
            e_t = res.errors[m.label]
            e_t = e_t[~np.isnan(e_t).any(axis=1)] @ to_target
            rep_i = analytic_region(m, table_i, resp.params, aux_idx)
            rep_t = analytic_region(m, table_t, resp.params, aux_idx)
            rows1.append([
                resp.name, m.label, np.sqrt(reg.mse_hat), _sqrt_se(reg.mse_hat, reg.std_error),
                np.sqrt(_region(rep_i).mse) if rep_i else float("nan"),
                np.sqrt(np.mean(np.sum(e_t**2, axis=1))),
                np.sqrt(_region(rep_t).mse) if rep_t else float("nan"),
                reg.replicates,
            ])

        if resp.params.p == 1:
            for eff in imbalance_table(resp.params, sources, aux[aux_idx[0]]):
                rows2.append([resp.name, eff.zone_id, eff.expected, eff.i_area, eff.i_aux, eff.delta])

            daw = next((m for m in methods if m.kind == "DAW"), None)
            dax = next((m for m in methods if m.kind == "DAX"), None)
            if daw is not None and dax is not None:
                rep_w = {e.scope_id: e for e in analytic_region(daw, table_i, resp.params, aux_idx) if e.scope == "target"}
                rep_x = {e.scope_id: e for e in analytic_region(dax, table_i, resp.params, aux_idx) if e.scope == "target"}
                effects = {e.zone_id: e for e in imbalance_table(resp.params, sources, aux[aux_idx[0]])}
                x_entries = table_i.aux[:, aux_idx[0]]
                x_src = table_i.to_source(x_entries)
                s_area = table_i.source_area()
                for k, zone in enumerate(inter.zones):
                    s = table_i.src[k]
                    sid = sources.ids[s]
                    p = table_i.area[k] / s_area[s]
                    q = x_entries[k] / x_src[s] if x_src[s] > 0 else float("nan")
                    mc_w = res.get(daw.label, "target", zone.id).mse_hat
                    mc_x = res.get(dax.label, "target", zone.id).mse_hat
                    ew, ex = rep_w[zone.id].mse, rep_x[zone.id].mse
                    rows3.append([
                        resp.name, sid, targets.ids[a2t[k]], zone.id, effects[sid].expected, effects[sid].delta,
                        abs(p - q), ex - ew, mc_x - mc_w,
                        np.sqrt(ex / ew) if ew > 0 else float("nan"),
                        np.sqrt(mc_x / mc_w) if mc_w > 0 else float("nan"),
                    ])
        if svg:
            _draw_figures(out, resp.name, sources, targets, aux, resp, aux_idx, methods, cfg.base_seed)

    paths = {
        "table1": _write_csv(out / "table1.csv",
                             ["response", "method", "sqrt_error", "sqrt_error_se", "sqrt_error_analytic",
                              "sqrt_target_error", "sqrt_target_error_analytic", "replicates"], rows1),
        "table2": _write_csv(out / "table2.csv",
                             ["response", "source", "expected", "area_share", "aux_share", "imbalance"], rows2),
        "table3": _write_csv(out / "table3.csv",
                             ["response", "source", "target", "intersection", "source_expected", "imbalance",
                              "abs_share_gap", "er_dax_minus_daw", "er_dax_minus_daw_mc",
                              "re_dax_over_daw", "re_dax_over_daw_mc"], rows3),
    }
    return paths


# ---------------------------------------------------------------------------
# toy 2


def _mean_relative_analytic(report) -> float:
    t = [e for e in report if e.scope == "target"]
    return float(np.mean([e.relative for e in t]))


def run_toy2(cfg: ExperimentConfig, svg: bool = False) -> dict:
    """Cell-level disaggregation from several nested source systems."""
    _check_replicates(cfg)
    out = Path(cfg.output_dir)
    systems = cfg.source_systems()
    targets = cfg.target_system()
    aux = cfg.realize_auxiliary()
    rows4, rows5, rows_imb = [], [], []
    aux_rows = [[spec.name, a.total, gini(a)] for spec, a in zip(cfg.auxiliary, aux)]
    mc_names = [m for m in cfg.methods if m != "COMPOSITE"]
    for resp in cfg.params:
        aux_idx = _aux_indices(cfg, resp)
        methods = _method_specs(mc_names, aux_idx)
        composite = MethodSpec("COMPOSITE")
        aux_name = "+".join(resp.auxiliary) or "area"
        for sys_name, sources in systems.items():
            table = intersect(sources, targets, aux)
            sc = Scenario(sources, targets, resp.params, methods, cfg.replicates, cfg.base_seed,
                          aux=aux, aux_index=aux_idx)
            res = mc_evaluate(sc, workers=cfg.workers)
            comp = analytic_region(composite, table, resp.params, aux_idx)
            e_region = float(res.expected_targets.sum())
            r4 = [aux_name, resp.params.alpha, ",".join(f"{b:g}" for b in resp.params.betas), sys_name,
                  e_region, np.sqrt(e_region)]
            r5 = list(r4[:5])
            by_label = {}
            for m in methods:
                reg = res.get(m.label, "region")
                rel, rel_se = res.mean_target_relative(m.label)
                by_label[m.label] = (np.sqrt(reg.mse_hat), _sqrt_se(reg.mse_hat, reg.std_error),
                                     100 * rel, 100 * rel_se, reg.replicates)
            nan5 = (float("nan"),) * 4 + (0,)
            cols = [by_label.get(lab, nan5) for lab in mc_names]
            r4 += [c[0] for c in cols] + [np.sqrt(_region(comp).mse)] + [c[1] for c in cols]
            r4.append(min(c[4] for c in cols) if cols else cfg.replicates)
            r5 += [c[2] for c in cols] + [100 * _mean_relative_analytic(comp)] + [c[3] for c in cols]
            rows4.append(r4)
            rows5.append(r5)
            if resp.params.p == 1:
                deltas = np.array([e.delta for e in imbalance_table(resp.params, sources, aux[aux_idx[0]])])
                rows_imb.append([aux_name, resp.params.alpha, resp.params.beta, sys_name,
                                 deltas.min(), deltas.mean(), deltas.max()])
            if res.failures:
                log.warning("%s / %s: fit failures %s", resp.name, sys_name, res.failures)
        if svg:
            first = next(iter(systems.values()))
            _draw_figures(out, resp.name, first, targets, aux, resp, aux_idx, methods + [composite],
                          cfg.base_seed)

    labels = mc_names
    head = ["auxiliary", "alpha", "betas", "sources"]
    paths = {
        "table4": _write_csv(out / "table4.csv",
                             head + ["expected_region", "sqrt_expected_region"] + labels + ["COMPOSITE"]
                             + [f"{m}_se" for m in labels] + ["replicates"], rows4),
        "table5": _write_csv(out / "table5.csv",
                             head + ["expected_region"] + labels + ["COMPOSITE"] + [f"{m}_se" for m in labels],
                             rows5),
        "imbalance": _write_csv(out / "imbalance.csv",
                                ["auxiliary", "alpha", "beta", "sources", "min", "mean", "max"], rows_imb),
        "auxiliary": _write_csv(out / "auxiliary.csv", ["name", "total", "gini"], aux_rows),
    }
    return paths


# ---------------------------------------------------------------------------
# robustness


def run_robustness(cfg: ExperimentConfig, svg: bool = False) -> dict:
    """Relative errors of correctly and incorrectly specified models for one response."""
    _check_replicates(cfg)
    if not cfg.models:
        raise ConfigError("robustness needs a non-empty 'models' list")
    out = Path(cfg.output_dir)
    sources = next(iter(cfg.source_systems().values()))
    targets = cfg.target_system()
    aux = cfg.realize_auxiliary()
    resp = cfg.params[0]
    aux_idx = _aux_indices(cfg, resp)
    methods = []
    for m in cfg.models:
        idx = tuple(cfg.aux_index(n) for n in m.auxiliary)
        if m.method == "DAX" and len(idx) != 1:
            raise ConfigError(f"model {m.label!r}: DAX takes exactly one auxiliary variable")
        methods.append(MethodSpec(m.method, idx if m.method != "DAW" else (), m.label))
    sc = Scenario(sources, targets, resp.params, methods, cfg.replicates, cfg.base_seed,
                  aux=aux, aux_index=aux_idx)
    res = mc_evaluate(sc, workers=cfg.workers)
    rows = []
    for spec, m in zip(cfg.models, methods):
        reg = res.get(m.label, "region")
        rel, rel_se = res.mean_target_relative(m.label)
        rows.append([m.label, m.kind, "+".join(spec.auxiliary) or "area", 100 * rel, 100 * rel_se,
                     np.sqrt(reg.mse_hat), _sqrt_se(reg.mse_hat, reg.std_error), reg.replicates])
    table = intersect(sources, targets, aux)
    comp = analytic_region(MethodSpec("COMPOSITE"), table, resp.params, aux_idx)
    rows.append(["COMPOSITE (analytic)", "COMPOSITE", "+".join(resp.auxiliary), 100 * _mean_relative_analytic(comp),
                 float("nan"), np.sqrt(_region(comp).mse), float("nan"), 0])
    if svg:
        _draw_figures(out, resp.name, sources, targets, aux, resp, aux_idx, methods, cfg.base_seed)
    return {"table6": _write_csv(out / "table6.csv",
                                 ["model", "method", "auxiliary", "relative_percent", "relative_se",
                                  "sqrt_error", "sqrt_error_se", "replicates"], rows)}


# ---------------------------------------------------------------------------
# asymptotics


def asymptotic_sweep(sources: ZoneSystem, targets: ZoneSystem, aux: list[CountField], params: AimParams,
                     aux_idx, scales, replicates: int, base_seed: int) -> list[dict]:
    """Fit the regression on ``k``-scaled data for each ``k`` and summarise the estimator and predictors.

    Replicate ``r`` at every scale uses the same stream ``(base_seed, r)``.
    """
    table = intersect(sources, targets, aux)
    region = sources.region
    cell_entry = table.cell_entry
    n_e, n_s, n_t = len(table), len(sources), len(targets)
    x_entries = table.aux[:, list(aux_idx)]
    x_src = np.zeros((n_s, len(aux_idx)))
    np.add.at(x_src, table.src, x_entries)
    s_area = table.source_area()
    gamma0 = params.gamma
    lin_e = gamma0[0] * table.area + x_entries @ gamma0[1:]
    lin_s = np.bincount(table.src, weights=lin_e, minlength=n_s)
    mean_unit = params.alpha * region.cell_area + sum(b * aux[j].counts for b, j in zip(params.betas, aux_idx))
    mean_unit = np.broadcast_to(np.asarray(mean_unit, dtype=float), (region.n_cells,))

    rows = []
    for k in scales:
        lam_t = k * np.bincount(table.tgt, weights=lin_e, minlength=n_t)
        lam_s = k * lin_s
        er_comp = float(np.sum(lam_t * (1 - lam_t / lam_s[_target_source(table)]))) \
            if _nested(table) else float("nan")
        design0 = Design(s_area, x_src, np.zeros(n_s), k)
        norms, z, resid = [], [], []
        sq_reg = sq_scr = 0.0
        used = boundary = unconverged = 0
        for r in range(replicates):
            y = replicate_rng(base_seed, r).poisson(k * mean_unit).astype(float)
            y_e = np.bincount(cell_entry, weights=y, minlength=n_e)
            y_s = np.bincount(table.src, weights=y_e, minlength=n_s)
            y_t = np.bincount(table.tgt, weights=y_e, minlength=n_t)
            res = fit(design0.with_y(y_s))
            if not res.converged:
                unconverged += 1
                continue
            used += 1
            boundary += int(res.boundary)
            g = res.gamma_hat
            norms.append(float(np.linalg.norm(g - gamma0)))
            z.append(standardized_estimator(res, gamma0, design0.with_y(y_s)))
            lin_hat = g[0] * table.area + x_entries @ g[1:]
            reg_t = k * np.bincount(table.tgt, weights=lin_hat, minlength=n_t)
            lin_hat_s = np.bincount(table.src, weights=lin_hat, minlength=n_s)
            scr_t = np.bincount(table.tgt, weights=lin_hat / lin_hat_s[table.src] * y_s[table.src], minlength=n_t)
            resid.append((reg_t - y_t) / np.sqrt(lam_t))
            sq_reg += float(np.sum((reg_t - y_t) ** 2))
            sq_scr += float(np.sum((scr_t - y_t) ** 2))
        if used == 0:
            raise NumericalError(f"no converged fit at scale {k}")
        z = np.array(z)
        resid = np.concatenate(resid)
        row = {
            "k": k, "replicates": used, "expected_region": float(lam_t.sum()),
            "median_norm": float(np.median(norms)),
            "resid_mean": float(resid.mean()), "resid_var": float(resid.var(ddof=1)) if resid.size > 1 else float("nan"),
            "mse_scr_over_composite": (sq_scr / used) / er_comp,
            "mse_reg_over_expected": (sq_reg / used) / float(lam_t.sum()),
            "boundary_fits": boundary, "unconverged": unconverged,
        }
        names = ["alpha"] + [f"beta{j + 1}" for j in range(len(aux_idx))]
        for j, nm in enumerate(names):
            row[f"z_mean_{nm}"] = float(z[:, j].mean())
            row[f"z_var_{nm}"] = float(z[:, j].var(ddof=1)) if used > 1 else float("nan")
        rows.append(row)
    return rows


def _nested(table: IntersectionTable) -> bool:
    return np.bincount(table.tgt, minlength=len(table.targets)).max() == 1


def _target_source(table: IntersectionTable) -> np.ndarray:
    out = np.empty(len(table.targets), dtype=np.int64)
    out[table.tgt] = table.src
    return out


def run_asymptotics(cfg: ExperimentConfig, svg: bool = False) -> dict:
    _check_replicates(cfg)
    out = Path(cfg.output_dir)
    sources = next(iter(cfg.source_systems().values()))
    targets = cfg.target_system()
    aux = cfg.realize_auxiliary()
    resp = cfg.params[0]
    aux_idx = _aux_indices(cfg, resp)
    rows = asymptotic_sweep(sources, targets, aux, resp.params, aux_idx, cfg.scales, cfg.replicates, cfg.base_seed)
    header = list(rows[0].keys())
    return {"diagnostics": _write_csv(out / "diagnostics.csv", header, [[r[h] for h in header] for r in rows])}


EXPERIMENTS = {"toy1": run_toy1, "toy2": run_toy2, "robustness": run_robustness, "asymptotics": run_asymptotics}
