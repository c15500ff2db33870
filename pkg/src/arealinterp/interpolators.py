"""Disaggregation predictors at intersection level and their aggregation to targets.

All proportional methods are written as ``Y_hat_st = w_st * Y_s``; the weight
functions are exposed so Monte-Carlo loops can apply them to many replicates
at once.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np

from .aim import AimParams
from .exceptions import (
    UnconvergedFitError,
    ZeroExpectationError,
    ZeroFittedDenominatorError,
)
from .grid import IntersectionTable
from .regression import FitResult

log = logging.getLogger(__name__)

METHODS = ("DAW", "DAX", "COMPOSITE", "REG", "SCR")


@dataclass(frozen=True)
class PredictionSet:
    method: str
    table: IntersectionTable
    values: np.ndarray
    negative: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "negative", values < 0)

    @property
    def target_values(self) -> np.ndarray:
        return self.table.to_target(self.values)

    @property
    def source_values(self) -> np.ndarray:
        return self.table.to_source(self.values)

    @property
    def any_negative(self) -> bool:
        return bool(self.negative.any())

    def clamped(self) -> "PredictionSet":
        """Copy with negative predictions set to zero (presentation only)."""
        return replace(self, values=np.maximum(self.values, 0.0))

    def rows(self):
        sid, tid = self.table.sources.ids, self.table.targets.ids
        for s, t, v in zip(self.table.src, self.table.tgt, self.values):
            yield self.method, sid[s], tid[t], float(v)


def write_predictions(preds, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "source_id", "target_id", "value"])
        for pred in preds:
            for method, s, t, v in pred.rows():
                w.writerow([method, s, t, repr(v)])


def _source_counts(source_counts, table: IntersectionTable) -> np.ndarray:
    if isinstance(source_counts, dict):
        return np.array([source_counts[s] for s in table.sources.ids], dtype=float)
    y = np.asarray(source_counts, dtype=float)
    if y.shape[-1] != len(table.sources):
        raise ValueError(f"expected {len(table.sources)} source counts, got {y.shape[-1]}")
    return y


def _aux(table: IntersectionTable, aux_index) -> np.ndarray:
    if aux_index is None:
        return table.aux
    return table.aux[:, list(np.atleast_1d(aux_index))]


def daw_weights(table: IntersectionTable) -> np.ndarray:
    return table.area / table.source_area()[table.src]


def dax_weights(table: IntersectionTable, aux_index: int = 0) -> np.ndarray:
    """Auxiliary shares; sources with zero auxiliary total fall back to area shares."""
    x = table.aux[:, aux_index]
    x_s = table.to_source(x)
    zero = x_s <= 0
    if zero.any():
        log.info("DAX: %d source(s) with zero auxiliary total allocated by area: %s",
                 int(zero.sum()), [table.sources.ids[i] for i in np.flatnonzero(zero)])
    w = np.where(zero[table.src], daw_weights(table), x / np.where(zero, 1.0, x_s)[table.src])
    return w


def linear_weights(gamma, table: IntersectionTable, aux_index=None, error=ZeroExpectationError) -> np.ndarray:
    """Weights ``(gamma' Z_st) / (gamma' Z_s)`` shared by the composite and scaled predictors."""
    gamma = np.asarray(gamma, dtype=float)
    lam = gamma[0] * table.area + _aux(table, aux_index) @ gamma[1:]
    lam_s = table.to_source(lam)
    if np.any(lam_s <= 0):
        bad = [table.sources.ids[i] for i in np.flatnonzero(lam_s <= 0)]
        raise error(f"nonpositive source denominator for {bad}")
    return lam / lam_s[table.src]


def predict_daw(source_counts, table: IntersectionTable) -> PredictionSet:
    y = _source_counts(source_counts, table)
    return PredictionSet("DAW", table, daw_weights(table) * y[table.src])


def predict_dax(source_counts, table: IntersectionTable, aux_index: int = 0) -> PredictionSet:
    y = _source_counts(source_counts, table)
    x_s = table.to_source(table.aux[:, aux_index])
    if np.any(x_s <= 0) and np.any(y[x_s <= 0] > 0):
        log.warning("DAX undefined where the auxiliary source total is zero; using area weights")
    return PredictionSet("DAX", table, dax_weights(table, aux_index) * y[table.src])


def composite_weight_star(params: AimParams, source_area: float, x_source: float) -> float:
    """Mixing weight on the areal predictor that reproduces the composite predictor.

    Solving ``w p + (1 - w) q = lambda_T / lambda_S`` gives
    ``w = alpha |S| / lambda_S`` for every target of the source.
    """
    lam_s = params.alpha * source_area + params.beta * x_source
    if lam_s <= 0:
        raise ZeroExpectationError("source has zero expected count")
    return params.alpha * source_area / lam_s


def predict_composite(params: AimParams, source_counts, table: IntersectionTable, aux_index=None) -> PredictionSet:
    """Oracle predictor with the true coefficients."""
    y = _source_counts(source_counts, table)
    if aux_index is None:
        aux_index = list(range(params.p))
    w = linear_weights(params.gamma, table, aux_index)
    return PredictionSet("COMPOSITE", table, w * y[table.src])


def _check_fit(fit: FitResult):
    if not fit.converged:
        raise UnconvergedFitError("regression fit did not converge")


def predict_reg(fit: FitResult, table: IntersectionTable, aux_index=None, clamp: bool = False) -> PredictionSet:
    """``gamma_hat' Z~_st``; negative values are kept and flagged unless ``clamp``."""
    _check_fit(fit)
    g = fit.gamma_hat
    values = fit.scale * (g[0] * table.area + _aux(table, aux_index) @ g[1:])
    pred = PredictionSet("REG", table, values)
    if pred.any_negative:
        log.info("REG produced %d negative intersection predictions", int(pred.negative.sum()))
    return pred.clamped() if clamp else pred


def predict_scr(fit: FitResult, source_counts, table: IntersectionTable, aux_index=None) -> PredictionSet:
    _check_fit(fit)
    y = _source_counts(source_counts, table)
    w = linear_weights(fit.gamma_hat, table, aux_index, error=ZeroFittedDenominatorError)
    return PredictionSet("SCR", table, w * y[table.src])


def pycnophylactic_check(pred: PredictionSet, source_counts, level: str = "source", tol: float = 1e-9) -> dict:
    """Relative mass discrepancy ``|sum Y_hat - Y| / max(Y, 1)`` at source or region level."""
    y = _source_counts(source_counts, pred.table)
    if level == "source":
        got, want = pred.source_values, y
    elif level == "region":
        got, want = np.array([pred.values.sum()]), np.array([y.sum()])
    else:
        raise ValueError(f"level must be 'source' or 'region', got {level!r}")
    disc = np.abs(got - want) / np.maximum(want, 1.0)
    return {"level": level, "discrepancy": disc, "max_discrepancy": float(disc.max()),
            "passed": bool(disc.max() <= tol)}
