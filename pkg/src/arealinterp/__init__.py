"""Areal interpolation of count data under a Poisson auxiliary-information model.

Core objects:

* :mod:`~arealinterp.grid` - raster regions, zone systems and source x target intersections
* :mod:`~arealinterp.field` - intensity surfaces and seeded Poisson cell counts
* :mod:`~arealinterp.aim` - the model ``Y_A ~ Poisson(alpha |A| + beta' x_A)``
* :mod:`~arealinterp.interpolators` - areal, dasymetric, composite, regression and scaled predictors
* :mod:`~arealinterp.regression` - identity-link Poisson regression with nonnegative coefficients
* :mod:`~arealinterp.error_analysis` - closed-form bias, variance and MSE
* :mod:`~arealinterp.montecarlo` - reproducible Monte-Carlo error estimates
* :mod:`~arealinterp.experiments` / :mod:`~arealinterp.cli` - simulation studies and command line
"""

__version__ = "0.1.0"

from .aim import AimParams, decompose_effects, expected_count
from .exceptions import ArealInterpError, ConfigError, NumericalError
from .field import CountField, IntensityField, simulate_counts
from .grid import GridRegion, IntersectionTable, Zone, ZoneSystem, build_zone_system, cells_system, intersect
from .interpolators import (
    predict_composite,
    predict_daw,
    predict_dax,
    predict_reg,
    predict_scr,
)
from .regression import Design, FitResult, design_from_table, fit

__all__ = [
    "AimParams", "ArealInterpError", "ConfigError", "CountField", "Design", "FitResult", "GridRegion",
    "IntensityField", "IntersectionTable", "NumericalError", "Zone", "ZoneSystem", "build_zone_system",
    "cells_system", "decompose_effects", "design_from_table", "expected_count", "fit", "intersect",
    "predict_composite", "predict_daw", "predict_dax", "predict_reg", "predict_scr", "simulate_counts",
]
