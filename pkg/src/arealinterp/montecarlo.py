"""Monte-Carlo evaluation of the predictors.

Each replicate draws ``Y`` cell counts from the model given the auxiliary
counts (optionally redrawing those too), applies every method and records the
target-level errors ``Y_hat_t - Y_t``. Replicate ``r`` always uses the random
stream ``(base_seed, r)``, so results do not depend on chunking or workers.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aim import AimParams
from .exceptions import NumericalError
from .field import AUX_STREAM, CountField, IntensityField, replicate_rng
from .grid import ZoneSystem, intersect
from .interpolators import daw_weights, dax_weights, linear_weights
from .regression import Design, fit as fit_regression

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MethodSpec:
    """A predictor and the auxiliary columns it uses (by index into the scenario's auxiliaries)."""

    kind: str
    aux: tuple[int, ...] = ()
    label: str = ""

    def __post_init__(self):
        kind = self.kind.upper()
        if kind == "SCR" or kind == "SCALED":
            kind = "SCR"
        if kind not in ("DAW", "DAX", "COMPOSITE", "REG", "SCR"):
            raise ValueError(f"unknown method {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "aux", tuple(int(a) for a in self.aux))
        if kind == "DAX" and len(self.aux) != 1:
            raise ValueError("DAX uses exactly one auxiliary variable")
        if not self.label:
            object.__setattr__(self, "label", kind if kind in ("DAW", "COMPOSITE") else
                               f"{kind}[{','.join(map(str, self.aux))}]")


_SPEC_RE = re.compile(r"^\s*([A-Za-z]+)\s*(?:\[([\d,\s]*)\])?\s*$")


def parse_method(text: str, default_aux: Sequence[int] = (0,)) -> MethodSpec:
    """``"DAW"``, ``"DAX[1]"``, ``"REG[0,1]"``, ``"SCR[]"``; bare REG/SCR/DAX use ``default_aux``."""
    m = _SPEC_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse method {text!r}")
    kind, idx = m.group(1).upper(), m.group(2)
    if idx is None:
        aux = tuple(default_aux)[:1] if kind == "DAX" else (tuple(default_aux) if kind in ("REG", "SCR") else ())
        label = kind
    else:
        aux = tuple(int(i) for i in idx.split(",") if i.strip())
        label = ""
    return MethodSpec(kind, aux, label)


@dataclass
class Scenario:
    sources: ZoneSystem
    targets: ZoneSystem
    params: AimParams
    methods: Sequence
    replicates: int
    base_seed: int
    aux: Sequence[CountField] = ()
    aux_intensity: Sequence[IntensityField] | None = None
    aux_index: Sequence[int] | None = None
    condition_on_x: bool = True
    scale: float = 1.0
    fit_tol: float = 1e-10

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if self.aux_index is None:
            self.aux_index = tuple(range(self.params.p))
        self.aux_index = tuple(self.aux_index)
        if len(self.aux_index) != self.params.p:
            raise ValueError("aux_index must name one auxiliary per model coefficient")
        self.methods = [m if isinstance(m, MethodSpec) else parse_method(m, self.aux_index or (0,))
                        for m in self.methods]
        if not self.condition_on_x and self.aux_intensity is None:
            raise ValueError("redrawing X needs aux_intensity")


@dataclass(frozen=True)
class McErrorEstimate:
    scope: str
    scope_id: str
    method: str
    replicates: int
    mse_hat: float
    std_error: float
    relative_hat: float
    bias: float
    variance: float
    expected: float


@dataclass
class McResult:
    estimates: list
    errors: dict
    expected_targets: np.ndarray
    target_ids: list
    failures: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.estimates)

    def get(self, method: str, scope: str = "region", scope_id: str | None = None) -> McErrorEstimate:
        for e in self.estimates:
            if e.method == method and e.scope == scope and (scope_id is None or e.scope_id == scope_id):
                return e
        raise KeyError((method, scope, scope_id))

    def mean_target_relative(self, method: str) -> tuple[float, float]:
        """Average over targets of ``sqrt(mse_t) / E(Y_t)`` and its delta-method standard error."""
        return mean_target_relative(self.errors[method], self.expected_targets)


def mean_target_relative(errors: np.ndarray, expected: np.ndarray) -> tuple[float, float]:
    errors = errors[~np.isnan(errors).any(axis=1)]
    sq = errors**2
    m = sq.mean(axis=0)
    n_t = m.size
    value = float(np.mean(np.sqrt(m) / expected))
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(m > 0, 1.0 / (2.0 * np.sqrt(m) * expected * n_t), 0.0)
    influence = sq @ coef
    se = float(influence.std(ddof=1) / np.sqrt(len(influence))) if len(influence) > 1 else float("nan")
    return value, se


class _Context:
    """Precomputed geometry shared by all replicates."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        region = sc.sources.region
        aux_fields = list(sc.aux) if sc.condition_on_x else []
        table = intersect(sc.sources, sc.targets, aux_fields)
        self.table = table
        self.cell_entry = table.cell_entry
        self.n_entries = len(table)
        self.src, self.tgt = table.src, table.tgt
        self.n_src, self.n_tgt = len(sc.sources), len(sc.targets)
        self.cell_area = region.cell_area
        self.area = table.area
        self.s_area = table.source_area()
        if sc.condition_on_x:
            self.fixed_aux_cells = np.array([f.counts for f in sc.aux], dtype=float).reshape(len(sc.aux), region.n_cells)
        else:
            self.fixed_aux_cells = None

    def aux_cells(self, r: int) -> np.ndarray:
        if self.fixed_aux_cells is not None:
            return self.fixed_aux_cells
        return np.array([
            replicate_rng(self.sc.base_seed, r, AUX_STREAM + 1 + j).poisson(f.cell_means)
            for j, f in enumerate(self.sc.aux_intensity)
        ], dtype=float)

    def entry_sum(self, cell_values: np.ndarray) -> np.ndarray:
        if cell_values.ndim == 1:
            return np.bincount(self.cell_entry, weights=cell_values, minlength=self.n_entries)
        return np.stack([self.entry_sum(v) for v in cell_values])

    def mean_cells(self, aux_cells: np.ndarray) -> np.ndarray:
        p = self.sc.params
        m = np.full(aux_cells.shape[1] if aux_cells.size else self.cell_entry.size, p.alpha * self.cell_area)
        for b, j in zip(p.betas, self.sc.aux_index):
            m = m + b * aux_cells[j]
        return self.sc.scale * m


def _target_sum(ctx: _Context, entry_values: np.ndarray) -> np.ndarray:
    return np.bincount(ctx.tgt, weights=entry_values, minlength=ctx.n_tgt)


def _replicate_errors(ctx: _Context, r: int) -> tuple[dict, set]:
    sc = ctx.sc
    aux_cells = ctx.aux_cells(r)
    aux_entries = ctx.entry_sum(aux_cells).T if aux_cells.size else np.zeros((ctx.n_entries, 0))
    rng = replicate_rng(sc.base_seed, r)
    y_cells = rng.poisson(ctx.mean_cells(aux_cells)).astype(float)
    y_entries = np.bincount(ctx.cell_entry, weights=y_cells, minlength=ctx.n_entries)
    y_src = np.bincount(ctx.src, weights=y_entries, minlength=ctx.n_src)
    y_tgt = _target_sum(ctx, y_entries)
    x_src = np.zeros((ctx.n_src, aux_entries.shape[1]))
    np.add.at(x_src, ctx.src, aux_entries)

    tab = _TableView(ctx, aux_entries)
    fits: dict = {}
    failed = set()
    out = {}
    for m in sc.methods:
        if m.kind == "DAW":
            pred = daw_weights(tab) * y_src[ctx.src]
        elif m.kind == "DAX":
            pred = dax_weights(tab, m.aux[0]) * y_src[ctx.src]
        elif m.kind == "COMPOSITE":
            pred = linear_weights(sc.params.gamma, tab, list(sc.aux_index)) * y_src[ctx.src]
        else:
            if m.aux not in fits:
                design = Design(ctx.s_area, x_src[:, list(m.aux)], y_src, sc.scale)
                fits[m.aux] = fit_regression(design, tol=sc.fit_tol)
            res = fits[m.aux]
            if not res.converged:
                failed.add(m.label)
                out[m.label] = np.full(ctx.n_tgt, np.nan)
                continue
            g = res.gamma_hat
            lin = g[0] * ctx.area + aux_entries[:, list(m.aux)] @ g[1:]
            if m.kind == "REG":
                pred = sc.scale * lin
            else:
                lin_s = np.bincount(ctx.src, weights=lin, minlength=ctx.n_src)
                if np.any(lin_s <= 0):
                    failed.add(m.label)
                    out[m.label] = np.full(ctx.n_tgt, np.nan)
                    continue
                pred = lin / lin_s[ctx.src] * y_src[ctx.src]
        out[m.label] = _target_sum(ctx, pred) - y_tgt
    return out, failed


class _TableView:
    """Duck-typed stand-in for IntersectionTable with replicate-specific auxiliaries."""

    def __init__(self, ctx: _Context, aux_entries: np.ndarray):
        self.src = ctx.src
        self.area = ctx.area
        self.aux = aux_entries
        self._n_src = ctx.n_src
        self._s_area = ctx.s_area
        self.sources = ctx.table.sources

    def source_area(self):
        return self._s_area

    def to_source(self, values):
        return np.bincount(self.src, weights=values, minlength=self._n_src)


def _fixed_weights(ctx: _Context, m: MethodSpec) -> np.ndarray:
    tab = _TableView(ctx, ctx.entry_sum(ctx.fixed_aux_cells).T if ctx.fixed_aux_cells.size
                     else np.zeros((ctx.n_entries, 0)))
    if m.kind == "DAW":
        return daw_weights(tab)
    if m.kind == "DAX":
        return dax_weights(tab, m.aux[0])
    return linear_weights(ctx.sc.params.gamma, tab, list(ctx.sc.aux_index))


def _run_chunk(sc: Scenario, reps: Sequence[int]):
    ctx = _Context(sc)
    labels = [m.label for m in sc.methods]
    errs = {lab: np.empty((len(reps), ctx.n_tgt)) for lab in labels}
    fails = {lab: 0 for lab in labels}
    fixed = [m for m in sc.methods if m.kind in ("DAW", "DAX", "COMPOSITE")]
    if sc.condition_on_x and len(fixed) == len(sc.methods):
        # weights do not change between replicates: evaluate all replicates at once
        mean_cells = ctx.mean_cells(ctx.fixed_aux_cells)
        y_cells = np.stack([replicate_rng(sc.base_seed, r).poisson(mean_cells) for r in reps]).astype(float)
        cell_tgt = ctx.tgt[ctx.cell_entry]
        cell_src = ctx.src[ctx.cell_entry]
        y_tgt = y_cells @ _onehot(cell_tgt, ctx.n_tgt)
        y_src = y_cells @ _onehot(cell_src, ctx.n_src)
        to_tgt = _onehot(ctx.tgt, ctx.n_tgt)
        for m in fixed:
            w = _fixed_weights(ctx, m)
            errs[m.label] = (y_src[:, ctx.src] * w) @ to_tgt - y_tgt
        return errs, fails
    for i, r in enumerate(reps):
        out, failed = _replicate_errors(ctx, r)
        for lab in labels:
            errs[lab][i] = out[lab]
        for lab in failed:
            fails[lab] += 1
    return errs, fails


def _onehot(idx: np.ndarray, n: int) -> np.ndarray:
    m = np.zeros((idx.size, n))
    m[np.arange(idx.size), idx] = 1.0
    return m


def _expected_targets(ctx: _Context) -> np.ndarray:
    sc = ctx.sc
    if sc.condition_on_x:
        aux_cells = ctx.fixed_aux_cells
    else:
        aux_cells = np.array([f.cell_means for f in sc.aux_intensity])
    m_cells = ctx.mean_cells(aux_cells)
    m_entries = np.bincount(ctx.cell_entry, weights=m_cells, minlength=ctx.n_entries)
    return _target_sum(ctx, m_entries)


def _estimate(scope, scope_id, method, sq_per_rep, err_per_rep_list, expected) -> McErrorEstimate:
    """``sq_per_rep``: squared error of the scope per replicate; ``err_per_rep_list``: target errors."""
    R = sq_per_rep.size
    mse = float(sq_per_rep.mean())
    se = float(sq_per_rep.std(ddof=1) / np.sqrt(R)) if R > 1 else float("nan")
    means = err_per_rep_list.mean(axis=0)
    bias_sq = float(np.sum(means**2))
    bias = float(np.sqrt(bias_sq)) if err_per_rep_list.shape[1] > 1 else float(means[0])
    variance = mse - bias_sq
    rel = float(np.sqrt(mse) / expected) if expected > 0 else float("nan")
    return McErrorEstimate(scope, scope_id, method, R, mse, se, rel, bias, variance, float(expected))


def mc_evaluate(scenario: Scenario, workers: int = 1) -> McResult:
    """Monte-Carlo mean squared errors at target, source (nested targets only) and region scope.

    Standard errors need at least two replicates; with one they are NaN.

    For aggregated scopes ``bias`` is the root-sum-square of the target biases, so
    ``mse = bias**2 + variance`` holds at every scope.
    """
    sc = scenario
    reps = list(range(sc.replicates))
    if workers > 1:
        chunks = [reps[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, [sc] * workers, chunks))
        labels = [m.label for m in sc.methods]
        errors = {}
        failures = {lab: 0 for lab in labels}
        for lab in labels:
            arr = np.empty((sc.replicates, len(sc.targets)))
            for chunk, (errs, fails) in zip(chunks, parts):
                arr[chunk] = errs[lab]
            errors[lab] = arr
        for _, fails in parts:
            for lab, n in fails.items():
                failures[lab] += n
    else:
        errors, failures = _run_chunk(sc, reps)

    ctx = _Context(sc)
    expected_t = _expected_targets(ctx)
    # source scope only when every target lies in one source
    owners = [np.unique(ctx.src[ctx.tgt == t]) for t in range(ctx.n_tgt)]
    nested = all(o.size == 1 for o in owners)
    t_src = np.array([o[0] for o in owners]) if nested else None
    tids = sc.targets.ids
    estimates = []
    for m in sc.methods:
        e = errors[m.label]
        ok = ~np.isnan(e).any(axis=1)
        if failures.get(m.label):
            log.warning("%s: %d replicate(s) skipped after fit failure", m.label, failures[m.label])
        e = e[ok]
        if e.shape[0] < 1:
            raise NumericalError(f"{m.label}: no usable replicate")
        sq = e**2
        for t in range(ctx.n_tgt):
            estimates.append(_estimate("target", tids[t], m.label, sq[:, t], e[:, [t]], expected_t[t]))
        if nested:
            for s in range(ctx.n_src):
                cols = np.flatnonzero(t_src == s)
                estimates.append(_estimate("source", sc.sources.ids[s], m.label, sq[:, cols].sum(axis=1),
                                           e[:, cols], expected_t[cols].sum()))
        estimates.append(_estimate("region", "region", m.label, sq.sum(axis=1), e, expected_t.sum()))
    return McResult(estimates, errors, expected_t, tids, {k: v for k, v in failures.items() if v})
