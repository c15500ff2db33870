"""Identity-link Poisson regression at source level.

The mean of row ``i`` is ``gamma' Z~_i`` with ``Z~_i = k (area_i, x_i)``.
Coefficients are constrained to the nonnegative orthant; the fit is a
projected Fisher-scoring ascent with step halving.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls
from scipy.special import gammaln

from .exceptions import NonpositiveMeanError, NotIdentifiableError, SingularInformationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Design:
    area: np.ndarray
    x: np.ndarray
    y: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        area = np.asarray(self.area, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size == area.size and x.size else x.reshape(area.size, -1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if not (area.size == x.shape[0] == y.size):
            raise ValueError("area, x and y must have one entry per row")
        if np.any(area <= 0):
            raise ValueError("areas must be positive")
        if np.any(x < 0) or np.any(y < 0):
            raise ValueError("auxiliary values and counts must be nonnegative")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "area", area)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def Z(self) -> np.ndarray:
        return np.column_stack([self.area, self.x])

    @property
    def Zt(self) -> np.ndarray:
        return self.scale * self.Z

    def with_y(self, y) -> "Design":
        return Design(self.area, self.x, y, self.scale)


def design_from_table(table, y_sources, aux_index=None, scale: float = 1.0) -> Design:
    """Source-level design from an intersection table; ``aux_index`` picks auxiliary columns."""
    x = table.source_aux()
    if aux_index is not None:
        x = x[:, list(aux_index)]
    return Design(table.source_area(), x, y_sources, scale)


def _means(design: Design, gamma) -> np.ndarray:
    mu = design.Zt @ np.asarray(gamma, dtype=float)
    if np.any(mu <= 0):
        raise NonpositiveMeanError("gamma' Z must be positive on every row")
    return mu


def log_likelihood(design: Design, gamma) -> float:
    mu = _means(design, gamma)
    y = design.y
    return float(np.sum(y * np.log(mu) - mu - gammaln(y + 1)))


def score(design: Design, gamma) -> np.ndarray:
    mu = _means(design, gamma)
    return design.Zt.T @ (design.y / mu - 1.0)


def fisher_info(design: Design, gamma) -> np.ndarray:
    mu = _means(design, gamma)
    Zt = design.Zt
    return (Zt.T / mu) @ Zt


def observed_info(design: Design, gamma) -> np.ndarray:
    """Negative Hessian of the log-likelihood."""
    mu = _means(design, gamma)
    Zt = design.Zt
    return (Zt.T * (design.y / mu**2)) @ Zt


@dataclass
class FitResult:
    gamma_hat: np.ndarray
    loglik: float
    score_norm: float
    fisher_info: np.ndarray
    iterations: int
    converged: bool
    boundary: bool
    scale: float = 1.0
    loglik_path: list = field(default_factory=list, repr=False)

    @property
    def alpha(self) -> float:
        return float(self.gamma_hat[0])

    @property
    def betas(self) -> np.ndarray:
        return self.gamma_hat[1:]

    def to_json(self) -> dict:
        return {
            "gamma_hat": [float(g) for g in self.gamma_hat],
            "loglik": float(self.loglik),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "boundary": bool(self.boundary),
        }

    @classmethod
    def from_json(cls, data: dict, scale: float = 1.0) -> "FitResult":
        g = np.asarray(data["gamma_hat"], dtype=float)
        return cls(g, float(data["loglik"]), float("nan"), np.full((g.size, g.size), np.nan),
                   int(data["iterations"]), bool(data["converged"]), bool(data["boundary"]), scale)


def _initial(Zt, y, init):
    if init is None:
        g0, _ = nnls(Zt, y)
    else:
        g0 = np.asarray(init, dtype=float).copy()
    # strictly inside the orthant: each coordinate carries >= 1e-8 mean(y) of the mean
    floor = 1e-8 * max(y.mean(), 1e-300) / np.maximum(Zt.mean(axis=0), 1e-300)
    return np.maximum(g0, floor)


def fit(design: Design, init=None, tol: float = 1e-10, max_iter: int = 100) -> FitResult:
    """Maximum likelihood over ``{gamma >= 0, gamma' Z~_i > 0}``.

    Converged when the projected score satisfies
    ``max |s| <= tol * (1 + |loglik|)``. A fit with a coefficient on zero is
    a valid (flagged) optimum, not a failure.
    """
    Zt = design.Zt
    y = design.y
    n, m = Zt.shape
    if n < m or np.linalg.matrix_rank(Zt) < m:
        raise NotIdentifiableError(f"{n} rows cannot identify {m} coefficients")
    const = float(gammaln(y + 1).sum())

    if y.sum() == 0:
        gamma = np.zeros(m)
        return FitResult(gamma, -const, 0.0, np.full((m, m), np.nan), 0, True, True,
                         design.scale, [-const])

    gamma = _initial(Zt, y, init)
    mu = Zt @ gamma
    if np.any(mu <= 0):
        raise NonpositiveMeanError("initial point is infeasible")
    # coordinates this close to zero with an outward gradient are treated as on the bound
    eps = 1e-6 * max(y.mean(), 1e-300) / np.maximum(Zt.mean(axis=0), 1e-300)
    loglik = float(np.sum(y * np.log(mu) - mu)) - const
    path = [loglik]
    converged = False
    it = 0
    g = Zt.T @ (y / mu - 1.0)
    pg = g
    for it in range(1, max_iter + 1):
        F = (Zt.T / mu) @ Zt
        near = (gamma <= eps) & (g <= 0)
        pg = np.where(near, 0.0, g)
        if np.max(np.abs(pg)) <= tol * (1.0 + abs(loglik)) and not np.any(near & (gamma > 0)):
            converged = True
            break

        # reduced Newton direction on the free coordinates; bound ones are pulled to zero
        active = near.copy()
        d = np.zeros(m)
        for _ in range(m):
            free = ~active
            d[:] = 0.0
            if free.any():
                d[free] = np.linalg.solve(F[np.ix_(free, free)], g[free])
            blocked = (gamma <= eps) & free & (d < 0) & (g <= 0)
            if not blocked.any():
                break
            active |= blocked
        d[active] = -gamma[active]
        if not np.any(d):
            d = np.where(near, 0.0, g / np.diag(F))

        t = 1.0
        accepted = False
        while t > 1e-14:
            cand = np.maximum(gamma + t * d, 0.0)
            step = cand - gamma
            dmu = Zt @ step
            new_mu = mu + dmu
            if np.all(new_mu > 0):
                # exact log-likelihood change, free of the large cancelling terms
                gain = float(np.sum(y * np.log1p(dmu / mu)) - dmu.sum())
                if gain >= 1e-4 * float(g @ step) or (gain >= 0 and float(g @ step) <= 0):
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            # no representable ascent left: accept only if the Newton decrement is at roundoff level
            converged = float(g[~active] @ d[~active]) <= 1e-12 * (1.0 + abs(loglik))
            break
        gamma = cand
        mu = new_mu
        loglik = loglik + gain
        path.append(loglik)
        g = Zt.T @ (y / mu - 1.0)
    else:
        near = (gamma <= eps) & (g <= 0)
        pg = np.where(near, 0.0, g)
        converged = bool(np.max(np.abs(pg)) <= tol * (1.0 + abs(loglik)))

    loglik = float(np.sum(y * np.log(mu) - mu)) - const
    F = (Zt.T / mu) @ Zt
    result = FitResult(gamma, loglik, float(np.max(np.abs(pg))), F, it, bool(converged),
                       bool(np.any(gamma <= 0)), design.scale, path)
    if not converged:
        log.warning("Poisson regression did not converge after %d iterations (score %.3g)",
                    it, result.score_norm)
    return result


def sqrtm_spd(F: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(F)
    if w.min() <= 1e-12 * max(w.max(), 1e-300):
        raise SingularInformationError("information matrix is not positive definite")
    return (V * np.sqrt(w)) @ V.T


def standardized_estimator(fit_result: FitResult, gamma_true, design: Design | None = None) -> np.ndarray:
    """``F^{1/2} (gamma_hat - gamma_true)`` with the symmetric square root.

    ``F`` is evaluated at ``gamma_true`` when the design is given, otherwise the
    information stored with the fit (at ``gamma_hat``) is used.
    """
    F = fisher_info(design, gamma_true) if design is not None else fit_result.fisher_info
    if not np.all(np.isfinite(F)):
        raise SingularInformationError("information matrix is not finite")
    return sqrtm_spd(F) @ (fit_result.gamma_hat - np.asarray(gamma_true, dtype=float))
