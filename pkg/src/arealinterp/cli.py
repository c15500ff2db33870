"""Command-line front end.

Subcommands: ``simulate``, ``fit``, ``predict``, ``evaluate`` and
``experiment {toy1|toy2|robustness|asymptotics}``. Exit codes: 0 success,
2 configuration / input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aim import AimParams
from .config import ExperimentConfig, default_config_path, load_config
from .error_analysis import write_error_report
from .exceptions import ConfigError, NumericalError
from .experiments import EXPERIMENTS, _aux_indices, _method_specs, analytic_region
from .field import CountField, IntensityField, read_counts, read_intensity, simulate_counts, write_field
from .grid import ZoneSystem, cells_system, intersect, read_labels
from .interpolators import (
    predict_composite,
    predict_daw,
    predict_dax,
    predict_reg,
    predict_scr,
    write_predictions,
)
from .montecarlo import Scenario, mc_evaluate
from .regression import FitResult, design_from_table, fit
from .svg import write_heatmap, zone_values_to_cells

log = logging.getLogger("arealinterp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


# ---------------------------------------------------------------------------
# input helpers


def _read_aux(paths, cell_area) -> list[CountField]:
    return [read_counts(p, cell_area) for p in (paths or [])]


def _check_region(name, obj, region):
    if obj.region != region:
        raise ConfigError(f"{name} is {obj.region.n_rows}x{obj.region.n_cols}, "
                          f"expected {region.n_rows}x{region.n_cols}")


def _targets(spec: str, sources: ZoneSystem, cell_area: float) -> ZoneSystem:
    if spec == "cells":
        return cells_system(sources.region)
    targets = read_labels(spec, cell_area, "target")
    _check_region("target layout", targets, sources.region)
    return targets


def _read_source_counts(path, sources: ZoneSystem) -> np.ndarray:
    """``source_id,count`` CSV; every source must appear exactly once."""
    values = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["source_id", "count"]:
            raise ConfigError(f"{path}: header must be source_id,count")
        for rec in reader:
            sid = rec["source_id"].strip()
            if sid in values:
                raise ConfigError(f"{path}: source {sid!r} listed twice")
            values[sid] = float(rec["count"])
    missing = [s for s in sources.ids if s not in values]
    extra = [s for s in values if s not in sources.ids]
    if missing or extra:
        raise ConfigError(f"{path}: missing sources {missing}, unknown sources {extra}")
    y = np.array([values[s] for s in sources.ids])
    if np.any(y < 0):
        raise ConfigError(f"{path}: counts must be nonnegative")
    return y


def _source_counts(args, sources: ZoneSystem) -> np.ndarray:
    if (args.counts is None) == (args.source_counts is None):
        raise ConfigError("give exactly one of --counts (cell counts) or --source-counts")
    if args.counts is not None:
        counts = read_counts(args.counts, args.cell_area)
        _check_region("cell counts", counts, sources.region)
        return sources.aggregate(counts.counts.astype(float))
    return _read_source_counts(args.source_counts, sources)


def _params(args) -> AimParams:
    if args.alpha is None:
        raise ConfigError("--alpha is required")
    return AimParams(args.alpha, tuple(args.betas or ()))


def _write_json(path, doc):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    if args.intensity is not None:
        if args.aux:
            raise ConfigError("--intensity and --aux are mutually exclusive")
        field_ = read_intensity(args.intensity, args.cell_area)
    else:
        aux = _read_aux(args.aux, args.cell_area)
        params = _params(args)
        if params.p != len(aux):
            raise ConfigError(f"{params.p} beta(s) but {len(aux)} --aux file(s)")
        if not aux:
            raise ConfigError("need --intensity, or --aux files with --alpha/--betas")
        region = aux[0].region
        for j, a in enumerate(aux):
            _check_region(f"auxiliary {j}", a, region)
        mean = params.alpha + sum(b * a.counts / region.cell_area for b, a in zip(params.betas, aux))
        field_ = IntensityField(region, np.broadcast_to(mean, (region.n_cells,)))
    counts = simulate_counts(field_, args.scale, args.seed, args.replicate)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_field(counts, args.out)
    if args.svg:
        write_heatmap(args.svg, counts.counts, counts.region, "simulated counts")
    print(f"wrote {args.out} (total {counts.total})")
    return EXIT_OK


def cmd_fit(args) -> int:
    sources = read_labels(args.sources, args.cell_area, "source")
    aux = _read_aux(args.aux, args.cell_area)
    for j, a in enumerate(aux):
        _check_region(f"auxiliary {j}", a, sources.region)
    y_src = _source_counts(args, sources)
    table = intersect(sources, sources, aux)
    res = fit(design_from_table(table, y_src))
    doc = res.to_json()
    try:
        cov = np.linalg.inv(res.fisher_info)
        doc["std_errors"] = [float(np.sqrt(max(v, 0.0))) for v in np.diag(cov)]
    except np.linalg.LinAlgError:
        doc["std_errors"] = None
    doc["auxiliary"] = [str(p) for p in (args.aux or [])]
    _write_json(args.out, doc)
    print(f"gamma_hat = {np.array2string(res.gamma_hat, precision=6)}; converged={res.converged}, "
          f"boundary={res.boundary}; wrote {args.out}")
    return EXIT_OK if res.converged else EXIT_NUMERICAL


def cmd_predict(args) -> int:
    sources = read_labels(args.sources, args.cell_area, "source")
    targets = _targets(args.targets, sources, args.cell_area)
    aux = _read_aux(args.aux, args.cell_area)
    for j, a in enumerate(aux):
        _check_region(f"auxiliary {j}", a, sources.region)
    y_src = _source_counts(args, sources)
    table = intersect(sources, targets, aux)
    method = args.method.upper()
    if method == "DAW":
        pred = predict_daw(y_src, table)
    elif method == "DAX":
        if not aux:
            raise ConfigError("DAX needs an --aux file")
        if not 0 <= args.aux_index < len(aux):
            raise ConfigError(f"--aux-index {args.aux_index} out of range")
        pred = predict_dax(y_src, table, args.aux_index)
    elif method == "COMPOSITE":
        params = _params(args)
        if params.p != len(aux):
            raise ConfigError(f"{params.p} beta(s) but {len(aux)} --aux file(s)")
        pred = predict_composite(params, y_src, table)
    else:
        if args.fit is not None:
            try:
                res = FitResult.from_json(json.loads(Path(args.fit).read_text(encoding="utf-8")))
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"{args.fit}: not a fit file ({exc})") from exc
            if res.gamma_hat.size != len(aux) + 1:
                raise ConfigError(f"fit has {res.gamma_hat.size} coefficients but {len(aux)} --aux file(s)")
        else:
            res = fit(design_from_table(table, y_src))
        pred = predict_reg(res, table) if method == "REG" else predict_scr(res, y_src, table)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_predictions([pred], args.out)
    if args.target_out:
        with open(args.target_out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["target_id", "value"])
            for tid, v in zip(targets.ids, pred.target_values):
                w.writerow([tid, repr(float(v))])
    if args.svg:
        cells = zone_values_to_cells(targets, pred.target_values)
        write_heatmap(args.svg, cells, sources.region, f"{method} prediction", outline=targets)
    if pred.any_negative:
        print(f"note: {int(pred.negative.sum())} negative prediction(s) kept as is", file=sys.stderr)
    print(f"wrote {args.out}")
    return EXIT_OK


def _config(args) -> ExperimentConfig:
    path = args.config if args.config is not None else default_config_path(args.name)
    cfg = load_config(path)
    return cfg.with_overrides(seed=args.seed, replicates=args.replicates, output_dir=args.out,
                              workers=getattr(args, "workers", None))


def evaluate(cfg: ExperimentConfig) -> list[Path]:
    """ErrorReport CSVs (Monte-Carlo rows plus closed-form rows with ``replicates`` 0)."""
    targets = cfg.target_system()
    aux = cfg.realize_auxiliary()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for resp in cfg.params:
        aux_idx = _aux_indices(cfg, resp)
        specs = _method_specs(cfg.methods, aux_idx)
        intensity = None
        if not cfg.condition_on_x:
            intensity = [cfg.intensity(a) for a in cfg.auxiliary]
        for sname, sources in cfg.source_systems().items():
            sc = Scenario(sources, targets, resp.params, specs, cfg.replicates, cfg.base_seed, aux=aux,
                          aux_intensity=intensity, aux_index=aux_idx, condition_on_x=cfg.condition_on_x)
            rows = list(mc_evaluate(sc, cfg.workers))
            if cfg.condition_on_x:
                table = intersect(sources, targets, aux)
                for spec in specs:
                    rep = analytic_region(spec, table, resp.params, aux_idx)
                    if rep is not None:
                        rows.extend(rep)
            path = out / f"errors_{resp.name}_{sname}.csv"
            write_error_report(rows, path)
            written.append(path)
    return written


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config).with_overrides(seed=args.seed, replicates=args.replicates,
                                                  output_dir=args.out, workers=args.workers)
    for p in evaluate(cfg):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _config(args)
    written = EXPERIMENTS[args.name](cfg, svg=args.svg)
    for key, p in written.items():
        print(f"{key}: {p}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_geometry(p, targets: bool = True):
    p.add_argument("--sources", required=True, help="source zone labels (row,col,label CSV)")
    if targets:
        p.add_argument("--targets", default="cells", help="target zone labels CSV, or 'cells' (default)")
    p.add_argument("--counts", help="cell counts of Y (row,col,value CSV), aggregated to sources")
    p.add_argument("--source-counts", help="source totals of Y (source_id,count CSV)")
    p.add_argument("--aux", action="append", help="auxiliary cell counts (repeatable)")


def _add_run(p):
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--replicates", type=int, help="Monte-Carlo replicates (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes for the replicates")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arealinterp", description="Areal interpolation of Poisson counts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    parser.add_argument("--cell-area", type=float, default=1.0, help="area of one grid cell (default 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw Poisson cell counts")
    p.add_argument("--intensity", help="intensity surface (row,col,value CSV)")
    p.add_argument("--aux", action="append", help="auxiliary cell counts; Y mean is alpha*area + beta'x")
    p.add_argument("--alpha", type=float)
    p.add_argument("--betas", type=float, nargs="*")
    p.add_argument("--scale", type=float, default=1.0, help="multiply the intensity by k")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", help="optional heatmap of the counts")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="identity-link Poisson regression on source totals")
    _add_geometry(p, targets=False)
    p.add_argument("--out", default="fit.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="interpolate source totals onto targets")
    p.add_argument("--method", required=True, type=str.upper, choices=["DAW", "DAX", "COMPOSITE", "REG", "SCR"])
    _add_geometry(p)
    p.add_argument("--aux-index", type=int, default=0, help="auxiliary used by DAX (default 0)")
    p.add_argument("--fit", help="fit.json for REG/SCR (fitted on the fly if absent)")
    p.add_argument("--alpha", type=float, help="true alpha (COMPOSITE)")
    p.add_argument("--betas", type=float, nargs="*", help="true betas (COMPOSITE)")
    p.add_argument("--out", required=True, help="intersection-level predictions CSV")
    p.add_argument("--target-out", help="optional target totals CSV")
    p.add_argument("--svg", help="optional heatmap of the target predictions")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="Monte-Carlo and closed-form error reports for a config")
    p.add_argument("--config", required=True)
    _add_run(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a packaged simulation study")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    p.add_argument("--config", help="config file (default: the packaged one)")
    _add_run(p)
    p.add_argument("--svg", action="store_true", help="also write SVG heatmaps")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
