"""Shape-parameter updates driven by the Bayesian posterior.

After each conjugate update the posterior precision is factored as
``P_theta = k^2 L L^T``. The columns of ``L`` act as ``p + 1`` representative
predictor vectors with responses ``y* = L^T mu``, whose least-squares fit is
exactly ``mu``. Mapping this pseudo-data back to the original scale at the
current ``nu`` and re-transforming it at a candidate ``nu`` gives a penalty
that, together with the likelihood of the new observations, is minimised
over ``nu``. The minimiser is blended into the current value with a small
learning rate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .bayes import BayesState
from .errors import DomainError, NumericalWarning, ParameterError, SingularDesignError
from .glogit import NU_BOUNDS, GlogitMap

MAX_CONDITION = 1e12
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class NuUpdateConfig:
    gamma: float = 0.05
    nu_bounds: tuple[float, float] = NU_BOUNDS
    k: float | None = None
    optimizer_tol: float = 1e-4
    max_iter: int = 200
    grid_size: int = 12
    window: int = 500
    profile_theta: bool = False

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ParameterError("gamma must lie in (0, 1)")
        if not 0 < self.nu_bounds[0] < self.nu_bounds[1]:
            raise ParameterError("nu bounds must be positive and ordered")
        if self.window < 1 or self.grid_size < 3:
            raise ParameterError("window must be positive and grid_size at least 3")


class Reconstruction(NamedTuple):
    y_star: np.ndarray
    L: np.ndarray
    x_star: np.ndarray
    X_star: np.ndarray


def _inverse(y, nu):
    return np.exp(-np.logaddexp(0.0, -y) / nu)


def reconstruct_representative(state: BayesState, map: GlogitMap | None = None, k: float | None = None) -> Reconstruction:
    """Pseudo-data ``(y*, L)`` and its original-scale image ``(x*, X*)``.

    ``k`` defaults to ``sqrt(max diag P_theta)`` so that the largest diagonal
    entry of ``L`` is one. Raises :class:`SingularDesignError` when the
    precision is too ill-conditioned to factor.
    """
    map = state.map if map is None else map
    P = state.P_theta
    ev = np.linalg.eigvalsh(P)
    cond = ev[-1] / ev[0] if ev[0] > 0 else np.inf
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularDesignError(f"posterior precision condition number {cond:.3g} exceeds {MAX_CONDITION:g}")
    if k is None:
        k = float(np.sqrt(np.max(np.diag(P))))
    if not k > 0:
        raise ParameterError("k must be positive")
    try:
        L = np.linalg.cholesky(P / k**2)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError("posterior precision is not positive definite") from exc
    y_star = L.T @ state.mu_theta
    lo, hi = map.lo, map.hi
    x_star = _inverse(np.clip(y_star, lo, hi), map.nu)
    X_star = _inverse(np.clip(L, lo, hi), map.nu)
    return Reconstruction(y_star, L, x_star, X_star)


def _glogit_log(lx, nu):
    # generalised logit written in terms of log(x)
    a = nu * lx
    return a - np.log(-np.expm1(a))


def _glogit_log_d(lx, nu):
    """Value and nu-derivative of the transform, from log(x)."""
    a = nu * lx
    om = -np.expm1(a)  # 1 - x^nu
    return a - np.log(om), lx / om


class NuObjective:
    """``nu -> L_new(nu) + L_rec(nu)`` with the data-dependent logs cached.

    ``new_x`` has shape ``(M,)`` and ``new_lags`` shape ``(p, M)`` (most
    recent lag first), both on the original scale. The new-data part carries
    the Jacobian of the transform; the reconstructed part is the Gaussian
    term only. With ``profile_theta`` the coefficients are refitted by least
    squares on both parts at every candidate instead of being held at the
    posterior mean. Calls accept a scalar or an array of candidates and raise
    :class:`DomainError` outside ``nu_bounds``.
    """

    def __init__(self, new_x, new_lags, recon: Reconstruction, state: BayesState, nu_bounds=NU_BOUNDS, profile_theta: bool = False):
        self.theta = state.mu_theta
        self.sigma2 = state.sigma2
        self.lx = np.log(np.atleast_1d(np.asarray(new_x, dtype=float)))
        self.M = self.lx.size
        self.ll = np.log(np.asarray(new_lags, dtype=float).reshape(self.theta.size - 1, self.M))
        self.lxs = np.log(recon.x_star)
        self.lXs = np.log(recon.X_star)
        self.const = 0.5 * (self.M + self.theta.size) * (LOG_2PI + np.log(self.sigma2)) - self.lx.sum()
        self.bounds = nu_bounds
        self.profile_theta = profile_theta

    def _check(self, nu):
        nu_arr = np.asarray(nu, dtype=float)
        lo, hi = self.bounds
        if not (nu_arr.min() >= lo - 1e-12 and nu_arr.max() <= hi + 1e-12):
            raise DomainError(f"nu must lie in [{lo}, {hi}]")
        return nu_arr

    def _theta(self, y, yl, ys, Ys):
        G = y.shape[0]
        if not self.profile_theta:
            return np.broadcast_to(self.theta, (G, self.theta.size))
        # stacked design per candidate: new data (ones + lags) and pseudo-data
        Z = np.concatenate([np.concatenate([np.ones((G, 1, self.M)), yl], axis=1), Ys], axis=2)
        t = np.concatenate([y, ys], axis=1)
        A = np.einsum("gim,gjm->gij", Z, Z)
        b = np.einsum("gim,gm->gi", Z, t)
        try:
            return np.linalg.solve(A, b[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            return np.broadcast_to(self.theta, (G, self.theta.size))

    def _residuals(self, v):
        a = v * self.lx
        om = -np.expm1(a)
        y = a - np.log(om)
        yl, dl = _glogit_log_d(self.ll[None, :, :], v[:, :, None])
        ys, ds = _glogit_log_d(self.lxs[None, :], v)
        Ys, dYs = _glogit_log_d(self.lXs[None, :, :], v[:, :, None])
        th = self._theta(y, yl, ys, Ys)
        r = y - th[:, :1] - np.einsum("gj,gjm->gm", th[:, 1:], yl)
        dr = self.lx / om - np.einsum("gj,gjm->gm", th[:, 1:], dl)
        rs = ys - np.einsum("gij,gi->gj", Ys, th)
        drs = ds - np.einsum("gij,gi->gj", dYs, th)
        return a, om, r, dr, rs, drs

    def __call__(self, nu):
        nu_arr = self._check(nu)
        v = nu_arr.reshape(-1, 1)
        a, om, r, _, rs, _ = self._residuals(v)
        jac = self.M * np.log(v[:, 0]) - np.log(om).sum(axis=1)
        ss = np.einsum("gm,gm->g", r, r) + np.einsum("gj,gj->g", rs, rs)
        return (self.const + ss / (2 * self.sigma2) - jac).reshape(nu_arr.shape)

    def grad(self, nu):
        """Derivative of the objective in ``nu`` (envelope form when profiling)."""
        nu_arr = self._check(nu)
        v = nu_arr.reshape(-1, 1)
        a, om, r, dr, rs, drs = self._residuals(v)
        # d/dnu log(1 - x^nu) = -x^nu log(x) / (1 - x^nu)
        djac = self.M / v[:, 0] + ((1.0 - om) * self.lx / om).sum(axis=1)
        g = (np.einsum("gm,gm->g", r, dr) + np.einsum("gj,gj->g", rs, drs)) / self.sigma2 - djac
        return g.reshape(nu_arr.shape)


def make_objective(new_x, new_lags, recon: Reconstruction, state: BayesState, nu_bounds=NU_BOUNDS, profile_theta=False) -> NuObjective:
    return NuObjective(new_x, new_lags, recon, state, nu_bounds, profile_theta)


def nu_objective(nu, new_x, new_lags, recon: Reconstruction, state: BayesState, nu_bounds=NU_BOUNDS):
    """New-data plus reconstructed-data negative log-likelihood at ``nu``."""
    return NuObjective(new_x, new_lags, recon, state, nu_bounds)(nu)


def minimise_nu(fun, bounds, grid_size: int = 12, xatol: float = 1e-4, max_iter: int = 200):
    """Bounded scalar minimisation: coarse grid, then refinement in the best bracket.

    ``fun`` must accept an array of candidates. When it also has a ``grad``
    method the stationary point is located by Brent root finding on the
    derivative, otherwise by bounded Brent on the values. Returns
    ``(nu_hat, ok)``; ``ok`` is False when no finite value was found or the
    local search did not converge within ``max_iter``.
    """
    lo, hi = bounds
    grid = np.linspace(lo, hi, grid_size)
    vals = fun(grid)
    finite = np.isfinite(vals)
    if not finite.any():
        return float("nan"), False
    i = int(np.argmin(np.where(finite, vals, np.inf)))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid_size - 1)]
    grad = getattr(fun, "grad", None)
    if grad is not None:
        ga, gb = grad(np.array([a, b]))
        if ga < 0 < gb:
            try:
                x, res = optimize.brentq(lambda v: float(grad(v)), a, b, xtol=xatol, maxiter=max_iter, full_output=True, disp=False)
            except (ValueError, RuntimeError):
                return float(grid[i]), False
            if not res.converged:
                return float(grid[i]), False
            return (float(x), True) if float(fun(x)) <= vals[i] else (float(grid[i]), True)
        # monotone bracket: the better end wins
        ends = np.array([a, b])
        return float(ends[np.argmin(fun(ends))]), True
    res = optimize.minimize_scalar(
        lambda v: float(fun(v)), bounds=(a, b), method="bounded", options={"xatol": xatol, "maxiter": max_iter}
    )
    if not res.success:
        return float(grid[i]), False
    return (float(res.x), True) if res.fun <= vals[i] else (float(grid[i]), True)


def nu_step(state: BayesState, new_x, new_lags, config: NuUpdateConfig = NuUpdateConfig()) -> BayesState:
    """Blend the objective's minimiser into the shape parameter.

    Runs after the conjugate update for the same batch. On a singular
    precision or a failed search the state is returned unchanged with a
    :class:`NumericalWarning`.
    """
    try:
        recon = reconstruct_representative(state, state.map, config.k)
    except SingularDesignError as exc:
        warnings.warn(f"shape update skipped: {exc}", NumericalWarning, stacklevel=2)
        return state
    nu_hat, ok = minimise_nu(
        make_objective(new_x, new_lags, recon, state, config.nu_bounds, config.profile_theta),
        config.nu_bounds,
        config.grid_size,
        config.optimizer_tol,
        config.max_iter,
    )
    if not ok:
        warnings.warn("shape update skipped: optimiser did not converge", NumericalWarning, stacklevel=2)
        return state
    nu = (1.0 - config.gamma) * state.nu + config.gamma * nu_hat
    nu = min(max(nu, config.nu_bounds[0]), config.nu_bounds[1])
    return replace(state, nu=float(nu))
