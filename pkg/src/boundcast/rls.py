"""Recursive least squares with a forgetting factor.

The state keeps the information matrix ``P = sum_i lambda^(age_i) y_i y_i^T``
rather than its inverse; each batch update solves one small system with
``P`` and inverts only the ``M x M`` innovation core.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .armodel import LagDesign, ols_fit
from .errors import NumericalWarning, ParameterError

DEFAULT_LAMBDA = 0.9999
DEFAULT_GUARD = 0.1


@dataclass(frozen=True)
class RlsState:
    theta: np.ndarray
    P: np.ndarray
    sigma2: float
    lam: float = DEFAULT_LAMBDA
    guard: float = DEFAULT_GUARD
    swap_variance_weights: bool = False

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ParameterError(f"forgetting factor must lie in (0, 1], got {self.lam}")
        if not self.sigma2 > 0:
            raise ParameterError("sigma2 must be positive")

    @property
    def p(self) -> int:
        return self.theta.size - 1


def forgetting_from_effective(n_eff: float) -> float:
    """Forgetting factor with ``n_eff`` effective observations."""
    return 1.0 - 2.0 / (n_eff + 1.0)


def effective_from_forgetting(lam: float) -> float:
    return (1.0 + lam) / (1.0 - lam)


def rls_init(design: LagDesign, lam: float = DEFAULT_LAMBDA, guard: float = DEFAULT_GUARD, **kw) -> RlsState:
    """Start from the batch OLS fit and ``P = Y_B Y_B^T``."""
    if not 0 < lam <= 1:
        raise ParameterError(f"forgetting factor must lie in (0, 1], got {lam}")
    state = ols_fit(design)
    P = design.predictors @ design.predictors.T
    return RlsState(state.theta, P, state.sigma2, lam, guard, **kw)


def rls_update(state: RlsState, new: LagDesign) -> RlsState:
    """Fold ``M`` new columns into the estimate.

    ``P <- lam^M P + Y Y^T`` and
    ``theta <- theta + Pd^-1 Y (I_M + Y^T Pd^-1 Y)^-1 (y - Y^T theta)``
    where ``Pd = lam^M P`` is the decayed prior information, which equals
    ``P_new^-1 Y e`` exactly. If the L1 norm of the step reaches ``guard`` the
    coefficients are frozen but ``P`` still advances.
    """
    M = new.n
    if M == 0:
        return state
    Y = new.predictors
    Pd = state.P * state.lam**M
    try:
        cf = linalg.cho_factor(Pd, lower=True)
    except linalg.LinAlgError:
        warnings.warn("RLS information matrix lost positive-definiteness; update rolled back", NumericalWarning, stacklevel=2)
        return state
    innov = new.targets - Y.T @ state.theta
    PinvY = linalg.cho_solve(cf, Y)
    core = np.eye(M) + Y.T @ PinvY
    step = PinvY @ np.linalg.solve(core, innov)
    P_new = Pd + Y @ Y.T
    P_new = 0.5 * (P_new + P_new.T)
    if not np.all(np.isfinite(P_new)) or not np.all(np.isfinite(step)):
        warnings.warn("non-finite RLS update; rolled back", NumericalWarning, stacklevel=2)
        return state
    theta = state.theta if np.abs(step).sum() >= state.guard else state.theta + step
    return replace(state, theta=theta, P=P_new)


def variance_weight(y_hat_original, lam: float):
    """``w* = 1 - (1 - lam) * 4 * yhat * (1 - yhat)``."""
    y = np.asarray(y_hat_original, dtype=float)
    return 1.0 - (1.0 - lam) * 4.0 * y * (1.0 - y)


def rls_variance_update(state: RlsState, y_hat_original: float, y_obs: float, y_pred: float) -> RlsState:
    """Exponentially weighted update of the error variance.

    ``sigma2 <- (1 - w) sigma2 + w (y_obs - y_pred)^2`` with ``w`` from
    :func:`variance_weight`. With ``swap_variance_weights`` the roles of
    ``w`` and ``1 - w`` are exchanged.
    """
    w = float(variance_weight(y_hat_original, state.lam))
    if state.swap_variance_weights:
        w = 1.0 - w
    err2 = (y_obs - y_pred) ** 2
    sigma2 = (1.0 - w) * state.sigma2 + w * err2
    return replace(state, sigma2=max(sigma2, 1e-12))
