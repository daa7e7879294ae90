"""AR(p) data shaping, least-squares fitting and order selection.

Designs follow the column convention used throughout the package: the
predictor matrix has ``p + 1`` rows (a row of ones, then lags 1..p) and one
column per observation, so that ``targets ~ predictors.T @ theta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import optimize

from .errors import InsufficientDataError, ParameterError, SingularDesignError
from .glogit import NU_BOUNDS, glogit_forward

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class LagDesign:
    targets: np.ndarray
    predictors: np.ndarray
    pair_index: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.pair_index is None:
            object.__setattr__(self, "pair_index", np.arange(self.targets.size))

    @property
    def p(self) -> int:
        return self.predictors.shape[0] - 1

    @property
    def n(self) -> int:
        return self.targets.size

    def __len__(self):
        return self.n

    def subset(self, sel) -> LagDesign:
        return LagDesign(self.targets[sel], self.predictors[:, sel], self.pair_index[sel])


@dataclass(frozen=True)
class ArState:
    p: int
    theta: np.ndarray
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ParameterError("sigma2 must be positive")
        if not np.all(np.isfinite(self.theta)):
            raise ParameterError("theta must be finite")


def build_lag_design(series, p: int, index=None) -> LagDesign:
    """Collect every complete (target, p lags) pair of ``series``.

    A pair is kept only when the target and all ``p`` lags are present.
    ``index`` labels the time of each target; defaults to positions.
    """
    if p < 1:
        raise ParameterError("AR order must be >= 1")
    values = np.asarray(series, dtype=float)
    if values.size <= p:
        raise InsufficientDataError(f"series of length {values.size} has no complete pair for p={p}")
    # windows[j] = values[j : j + p + 1]; target is the last entry
    windows = sliding_window_view(values, p + 1)
    keep = ~np.isnan(windows).any(axis=1)
    if not keep.any():
        raise InsufficientDataError("no complete observation-predictor pair")
    win = windows[keep]
    lags = win[:, -2::-1].T if p > 0 else np.empty((0, win.shape[0]))
    predictors = np.vstack([np.ones(win.shape[0]), lags])
    pos = np.flatnonzero(keep) + p
    labels = pos if index is None else np.asarray(index)[pos]
    return LagDesign(win[:, -1].copy(), np.ascontiguousarray(predictors), labels)


def transform_design(design: LagDesign, nu: float) -> LagDesign:
    """Apply ``L_nu`` to targets and lag rows of an original-domain design."""
    lags = glogit_forward(design.predictors[1:], nu)
    return LagDesign(
        glogit_forward(design.targets, nu),
        np.vstack([design.predictors[:1], np.atleast_2d(lags)]),
        design.pair_index,
    )


def _solve_normal(predictors, targets):
    gram = predictors @ predictors.T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        rank = np.linalg.matrix_rank(predictors)
        raise SingularDesignError(
            f"design is rank deficient or ill-conditioned: rank {rank} of "
            f"{predictors.shape[0]}, condition number {cond:.3g}"
        )
    return np.linalg.solve(gram, predictors @ targets)


def ols_fit(design: LagDesign) -> ArState:
    """Least-squares AR coefficients and mean squared residual."""
    theta = _solve_normal(design.predictors, design.targets)
    resid = design.targets - design.predictors.T @ theta
    sigma2 = float(np.mean(resid**2))
    return ArState(design.p, theta, max(sigma2, np.finfo(float).tiny))


def pacf(series, nlags: int) -> np.ndarray:
    """Partial autocorrelations at lags ``1..nlags`` via Durbin-Levinson.

    Autocovariances use all pairs where both values are present, so the
    series may contain NaN.
    """
    x = np.asarray(series, dtype=float)
    present = ~np.isnan(x)
    xc = np.where(present, x - np.nanmean(x), 0.0)
    n = present.sum()
    acov = np.array([np.dot(xc[: x.size - k], xc[k:]) / n for k in range(nlags + 1)])
    r = acov / acov[0]
    out = np.empty(nlags)
    phi = np.zeros(0)
    for k in range(1, nlags + 1):
        if k == 1:
            a = r[1]
        else:
            a = (r[k] - phi @ r[k - 1 : 0 : -1]) / (1.0 - phi @ r[1:k])
        phi = np.append(phi - a * phi[::-1], a)
        out[k - 1] = a
    return out


def select_order(series, p_min: int = 1, p_max: int = 6, min_points: int = 50) -> int:
    """Largest lag in ``[p_min, p_max]`` whose PACF leaves the 95% band."""
    x = np.asarray(series, dtype=float)
    n = int(np.count_nonzero(~np.isnan(x)))
    if n < min_points:
        raise InsufficientDataError(f"order selection needs {min_points} points, got {n}")
    band = 1.96 / np.sqrt(n)
    significant = np.flatnonzero(np.abs(pacf(x, p_max)) > band) + 1
    significant = significant[significant >= p_min]
    return int(significant.max()) if significant.size else p_min


# -- shape parameter by profile likelihood ------------------------------------


def profile_negloglik(nu: float, design_x: LagDesign) -> float:
    """Negative log-likelihood of ``nu`` with theta and sigma2 profiled out.

    ``design_x`` holds original-domain values; the Jacobian of the transform
    on the targets is included so different ``nu`` are comparable.
    """
    yd = transform_design(design_x, nu)
    state = ols_fit(yd)
    x = design_x.targets
    n = x.size
    lx = np.log(x)
    log_jac = n * np.log(nu) - lx.sum() - np.log1p(-np.exp(nu * lx)).sum()
    return 0.5 * n * (np.log(2 * np.pi * state.sigma2) + 1.0) - log_jac


def fit_ar_lnu(design_x: LagDesign, nu_bounds=NU_BOUNDS, xatol: float = 1e-4) -> tuple[ArState, float]:
    """Joint fit of theta, sigma2 and nu on an original-domain design.

    Alternating the closed-form (theta, sigma2) step with a 1-D search over
    nu is collapsed here into minimising the profile likelihood in nu.
    """
    lo, hi = nu_bounds
    grid = np.linspace(lo, hi, 30)
    vals = []
    for g in grid:
        try:
            vals.append(profile_negloglik(g, design_x))
        except SingularDesignError:
            vals.append(np.inf)
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(
        profile_negloglik, bounds=(a, b), args=(design_x,), method="bounded", options={"xatol": xatol}
    )
    nu = float(res.x) if res.fun <= vals[i] else float(grid[i])
    return ols_fit(transform_design(design_x, nu)), nu


__all__ = [
    "LagDesign",
    "ArState",
    "build_lag_design",
    "transform_design",
    "ols_fit",
    "pacf",
    "select_order",
    "profile_negloglik",
    "fit_ar_lnu",
]
