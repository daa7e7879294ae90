"""Adaptive conjugate Bayesian AR estimation with a fixed shape parameter.

Gaussian prior on the coefficients (mean ``mu_theta``, precision
``P_theta``), Gamma prior on the error precision (``alpha``, ``beta``).
Between batches the previous posterior is widened by decay factors before it
is reused as the prior.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .armodel import LagDesign
from .errors import NumericalWarning, ParameterError
from .glogit import GlogitMap, InflatedNormal, PredictiveCdf
from .rls import RlsState, rls_update


@dataclass(frozen=True)
class BayesState:
    mu_theta: np.ndarray
    P_theta: np.ndarray
    alpha: float
    beta: float
    nu: float = 1.0
    lambda_theta: float = 0.995
    lambda_z: float = 0.995
    eps: float = 0.005

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ParameterError("alpha and beta must be positive")

    @property
    def p(self) -> int:
        return self.mu_theta.size - 1

    @property
    def sigma2(self) -> float:
        """Point estimate of the error variance, ``beta / alpha``."""
        return self.beta / self.alpha

    @property
    def map(self) -> GlogitMap:
        return GlogitMap(self.nu, self.eps)


def bayes_init(
    p: int,
    prior_scale: float = 1e-4,
    alpha0: float = 101.0,
    beta0: float = 1.0,
    nu0: float = 1.0,
    lambda_theta: float = 0.995,
    lambda_z: float = 0.995,
    mu0=None,
    eps: float = 0.005,
) -> BayesState:
    for name, v in [("prior_scale", prior_scale), ("alpha0", alpha0), ("beta0", beta0), ("nu0", nu0)]:
        if not v > 0:
            raise ParameterError(f"{name} must be positive, got {v}")
    for name, v in [("lambda_theta", lambda_theta), ("lambda_z", lambda_z)]:
        if not 0 < v <= 1:
            raise ParameterError(f"{name} must lie in (0, 1], got {v}")
    mu = np.zeros(p + 1) if mu0 is None else np.asarray(mu0, dtype=float).copy()
    return BayesState(mu, prior_scale * np.eye(p + 1), float(alpha0), float(beta0), float(nu0), lambda_theta, lambda_z, eps)


def bayes_decay(state: BayesState, M: int = 1) -> BayesState:
    """Widen the carried-over posterior before it acts as the next prior.

    Covariance grows by ``lambda_theta**-M``; the Gamma parameters shrink by
    ``lambda_z`` (their ratio, the variance estimate, is unchanged).
    """
    return replace(
        state,
        P_theta=state.P_theta * state.lambda_theta**M,
        alpha=state.alpha * state.lambda_z,
        beta=state.beta * state.lambda_z,
    )


def _noise_precision(state: BayesState, M: int, P_Z):
    """Return (P_Z, s) with ``P_Z = s * W``; a scalar ``P_Z`` means ``s * I``.

    The scalar case is returned as a float so that large batches never form
    an ``M x M`` matrix.
    """
    if P_Z is None:
        s = state.alpha / state.beta
        return s, s
    P_Z = np.asarray(P_Z, dtype=float)
    if P_Z.size == 1:
        return float(P_Z.ravel()[0]), float(P_Z.ravel()[0])
    P_Z = np.atleast_2d(P_Z)
    if P_Z.shape != (M, M):
        raise ParameterError(f"P_Z must be {M}x{M}, got {P_Z.shape}")
    return P_Z, float(np.trace(P_Z) / M)


def posterior_mean_direct(mu, P_theta, Y, y, P_Z):
    """``(P + Y P_Z Y^T)^-1 (Y P_Z y + P mu)``."""
    P_star = P_theta + Y @ P_Z @ Y.T
    return linalg.solve(P_star, Y @ P_Z @ y + P_theta @ mu, assume_a="pos")


def posterior_mean_woodbury(mu, P_theta, Y, y, P_Z):
    """Innovation form ``mu + P^-1 Y (P_Z^-1 + Y^T P^-1 Y)^-1 (y - Y^T mu)``."""
    PinvY = linalg.solve(P_theta, Y, assume_a="pos")
    core = linalg.inv(P_Z) + Y.T @ PinvY
    return mu + PinvY @ linalg.solve(core, y - Y.T @ mu, assume_a="pos")


def bayes_update(state: BayesState, design: LagDesign, P_Z=None) -> BayesState:
    """Conjugate posterior after a batch of ``M`` transformed observations.

    ``design`` must already be on the transformed scale. ``P_Z`` defaults to
    ``(alpha / beta) * I``. The Gamma rate uses the normal-inverse-gamma form
    with the coefficient precision expressed relative to the noise scale
    (``P_theta / s``). On loss of positive-definiteness or a nonpositive
    ``beta`` the input state is returned unchanged with a warning.
    """
    M = design.n
    if M == 0:
        return state
    Y, y = design.predictors, design.targets
    if Y.shape[0] != state.mu_theta.size:
        raise ParameterError(f"design has {Y.shape[0]} predictor rows, state expects {state.mu_theta.size}")
    P_Z, s = _noise_precision(state, M, P_Z)
    P = state.P_theta
    mu = state.mu_theta
    if np.ndim(P_Z) == 0:
        YPZ = Y * P_Z
        yWy = float(y @ y)
    else:
        YPZ = Y @ P_Z
        yWy = float(y @ P_Z @ y) / s
    P_star = P + YPZ @ Y.T
    P_star = 0.5 * (P_star + P_star.T)
    try:
        cf = linalg.cho_factor(P_star, lower=True)
    except linalg.LinAlgError:
        warnings.warn("posterior precision not positive definite; update rolled back", NumericalWarning, stacklevel=2)
        return state
    b = YPZ @ y + P @ mu
    mu_star = linalg.cho_solve(cf, b)
    quad = yWy + (mu @ P @ mu) / s - (mu_star @ P_star @ mu_star) / s
    alpha_star = state.alpha + 0.5 * M
    beta_star = state.beta + 0.5 * quad
    if not (beta_star > 0 and np.all(np.isfinite(mu_star))):
        warnings.warn("posterior Gamma rate not positive; update rolled back", NumericalWarning, stacklevel=2)
        return state
    return replace(state, mu_theta=mu_star, P_theta=P_star, alpha=alpha_star, beta=beta_star)


def bayes_rls_coincidence_check(state: BayesState, design: LagDesign, rls_state: RlsState | None = None, atol: float = 1e-8) -> bool:
    """Whether the Bayes mean update with ``P_Z = I`` equals the RLS step.

    The RLS state defaults to one sharing the Bayes mean and precision, run
    without forgetting or step guard.
    """
    if rls_state is None:
        rls_state = RlsState(state.mu_theta, state.P_theta, state.sigma2, lam=1.0, guard=np.inf)
    bayes_mu = posterior_mean_woodbury(state.mu_theta, state.P_theta, design.predictors, design.targets, np.eye(design.n))
    rls_theta = rls_update(rls_state, design).theta
    return bool(np.allclose(bayes_mu, rls_theta, rtol=0, atol=atol))


def bayes_predictive(state: BayesState, y_lags, student_t: bool = False) -> PredictiveCdf:
    """Plug-in one-step forecast on the original scale.

    ``y_lags`` are the transformed lags (most recent first), without the
    intercept entry. Variance is ``beta/alpha`` plus the coefficient
    uncertainty ``b^T P_theta^-1 b``.
    """
    b = np.concatenate([[1.0], np.asarray(y_lags, dtype=float)])
    mean = float(b @ state.mu_theta)
    param_var = float(b @ linalg.solve(state.P_theta, b, assume_a="pos"))
    var = state.sigma2 + max(param_var, 0.0)
    m = state.map
    df = 2.0 * state.alpha if student_t else None
    return PredictiveCdf(InflatedNormal(mean, float(np.sqrt(var)), m.lo, m.hi, df), m)
