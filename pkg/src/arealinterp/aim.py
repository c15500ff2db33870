"""Auxiliary-information model: ``Y_A ~ Poisson(alpha |A| + beta' x_A)``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DegenerateModelError, NotAPartitionError, ZeroExpectationError
from .field import CountField, IntensityField
from .grid import ZoneSystem


@dataclass(frozen=True)
class AimParams:
    alpha: float
    betas: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "betas", tuple(float(b) for b in np.atleast_1d(self.betas)))
        if self.alpha < 0 or any(b < 0 for b in self.betas):
            raise DegenerateModelError("model coefficients must be nonnegative")
        if self.alpha + sum(self.betas) <= 0:
            raise DegenerateModelError("at least one coefficient must be positive")

    @property
    def p(self) -> int:
        return len(self.betas)

    @property
    def beta(self) -> float:
        """The single auxiliary coefficient (p == 1 only)."""
        if self.p != 1:
            raise ValueError(f"model has {self.p} auxiliary coefficients")
        return self.betas[0]

    @property
    def gamma(self) -> np.ndarray:
        return np.array((self.alpha,) + self.betas)

    @classmethod
    def from_gamma(cls, gamma) -> "AimParams":
        gamma = np.asarray(gamma, dtype=float)
        return cls(gamma[0], tuple(gamma[1:]))

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "betas": list(self.betas)}


def expected_count(params: AimParams, area, x=()) -> float | np.ndarray:
    """``alpha * area + sum_j beta_j * x_j``; broadcasts over leading axes of ``x``."""
    x = np.asarray(x, dtype=float)
    if params.p == 0:
        return params.alpha * np.asarray(area, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != params.p:
        raise ValueError(f"expected {params.p} auxiliary values, got shape {x.shape}")
    return params.alpha * np.asarray(area, dtype=float) + x @ np.asarray(params.betas)


def conditional_intensity(params: AimParams, aux: Sequence[CountField]) -> IntensityField:
    """Per-cell intensity of Y given realised auxiliary counts."""
    if len(aux) != params.p:
        raise ValueError(f"model has {params.p} auxiliary coefficients, got {len(aux)} fields")
    region = aux[0].region if aux else None
    if region is None:
        raise ValueError("area-only model needs an explicit region; use homogeneous_intensity")
    values = np.full(region.n_cells, params.alpha)
    for b, f in zip(params.betas, aux):
        values = values + b * f.counts / region.cell_area
    return IntensityField(region, values)


@dataclass(frozen=True)
class EffectDecomposition:
    zone_id: str
    expected: float
    i_area: float
    i_aux: float
    delta: float


def decompose_effects(params: AimParams, area: float, x: float, zone_id: str = "") -> EffectDecomposition:
    """Shares of the areal and auxiliary effects in ``E(Y_A)`` and their imbalance."""
    beta = params.beta
    lam = params.alpha * area + beta * float(x)
    if lam <= 0:
        raise ZeroExpectationError(f"zone {zone_id!r} has zero expected count")
    i_area = params.alpha * area / lam
    i_aux = beta * float(x) / lam
    return EffectDecomposition(zone_id, lam, i_area, i_aux, (params.alpha * area - beta * float(x)) / lam)


@dataclass(frozen=True)
class PiecewiseModel:
    control_zones: ZoneSystem
    intensities: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "intensities", tuple(float(a) for a in self.intensities))
        if len(self.intensities) != len(self.control_zones):
            raise ValueError("need one intensity per control zone")
        if any(a < 0 for a in self.intensities):
            raise DegenerateModelError("intensities must be nonnegative")


def piecewise_intensity(model: PiecewiseModel) -> IntensityField:
    cz = model.control_zones
    covered = np.zeros(cz.region.n_cells, dtype=bool)
    for zone in cz.zones:
        covered[list(zone.cells)] = True
    if not covered.all():
        raise NotAPartitionError("control zones do not cover the region")
    return IntensityField(cz.region, np.asarray(model.intensities)[cz.labels])


def imbalance_table(params: AimParams, sources: ZoneSystem, x: CountField) -> list[EffectDecomposition]:
    x_s = sources.aggregate(x.counts.astype(float))
    return [
        decompose_effects(params, area, xs, zid)
        for zid, area, xs in zip(sources.ids, sources.areas, x_s)
    ]
