"""Online Newton-Raphson on the exponentially forgotten likelihood.

The parameter vector is ``w = [theta_0..theta_p, sigma2, nu]``. Each new
observation contributes its log-likelihood score ``h``; the Hessian is
approximated by the forgotten sum of outer products ``h h^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .glogit import NU_BOUNDS

SIGMA2_FLOOR = 1e-8
MAX_CONDITION = 1e12
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class NrState:
    w: np.ndarray
    hess: np.ndarray
    lam: float = 0.9999
    n_skipped: int = 0
    last_skipped: bool = False

    @property
    def p(self) -> int:
        return self.w.size - 3

    @property
    def theta(self) -> np.ndarray:
        return self.w[:-2]

    @property
    def sigma2(self) -> float:
        return float(self.w[-2])

    @property
    def nu(self) -> float:
        return float(self.w[-1])


def pack(theta, sigma2: float, nu: float) -> np.ndarray:
    return np.concatenate([np.asarray(theta, dtype=float), [sigma2, nu]])


def nr_init(theta, sigma2: float, nu: float, lam: float = 0.9999, hess=None) -> NrState:
    """State at ``w0`` with a zero Hessian unless one is supplied."""
    w = pack(theta, sigma2, nu)
    if hess is None:
        hess = np.zeros((w.size, w.size))
    return NrState(w, np.asarray(hess, dtype=float), lam)


def _pieces(x_new, x_lags, w):
    theta, sigma2, nu = w[:-2], w[-2], w[-1]
    x_new = np.asarray(x_new, dtype=float)
    x_lags = np.asarray(x_lags, dtype=float)
    lx, ll = np.log(x_new), np.log(x_lags)
    a, al = nu * lx, nu * ll
    om, oml = -np.expm1(a), -np.expm1(al)  # 1 - x**nu
    y = a - np.log(om)
    yl = al - np.log(oml)
    r = y - theta[0] - np.tensordot(theta[1:], yl, axes=(0, 0))
    return theta, sigma2, nu, lx, ll, a, om, oml, yl, r


def nr_obs_loglik(x_new, x_lags, w):
    """Log-likelihood of one observation (or a batch along the last axis).

    ``x_lags`` holds the ``p`` lagged values, most recent first.
    """
    _, sigma2, nu, lx, _, _, om, _, _, r = _pieces(x_new, x_lags, w)
    return -0.5 * (LOG_2PI + np.log(sigma2)) - r**2 / (2 * sigma2) + np.log(nu) - lx - np.log(om)


def nr_gradient(x_new, x_lags, w):
    """Score of :func:`nr_obs_loglik` with respect to ``w``.

    For a batch of ``N`` observations returns a ``(p + 3, N)`` array.
    """
    theta, sigma2, nu, lx, ll, a, om, oml, yl, r = _pieces(x_new, x_lags, w)
    g_theta = np.concatenate([np.ones((1,) + np.shape(r)), np.reshape(yl, (theta.size - 1,) + np.shape(r))]) * (r / sigma2)
    g_s2 = -0.5 / sigma2 + r**2 / (2 * sigma2**2)
    dr_dnu = lx / om - np.tensordot(theta[1:], ll / oml, axes=(0, 0))
    g_nu = -(r / sigma2) * dr_dnu + 1.0 / nu + np.exp(a) * lx / om
    return np.concatenate([g_theta, np.reshape(g_s2, (1,) + np.shape(r)), np.reshape(g_nu, (1,) + np.shape(r))])


def _safeguard(w, nu_bounds=NU_BOUNDS):
    w = w.copy()
    w[-2] = max(w[-2], SIGMA2_FLOOR)
    w[-1] = min(max(w[-1], nu_bounds[0]), nu_bounds[1])
    return w


def _well_conditioned(hess) -> bool:
    ev = np.linalg.eigvalsh(hess)
    return bool(np.all(np.isfinite(ev)) and ev[0] > 0 and ev[-1] / ev[0] < MAX_CONDITION)


def nr_update(state: NrState, x_new: float, x_lags) -> NrState:
    """One Newton step after observing ``x_new``.

    The Hessian always advances. If it is singular (as it is right after a
    zero initialisation) the parameter step is skipped and counted.
    """
    lam = state.lam
    h = nr_gradient(x_new, x_lags, state.w).ravel()
    hess = lam * state.hess + (1.0 - lam) * np.outer(h, h)
    hess = 0.5 * (hess + hess.T)
    if not np.all(np.isfinite(h)) or not _well_conditioned(hess):
        if not np.all(np.isfinite(hess)):
            hess = state.hess
        return replace(state, hess=hess, n_skipped=state.n_skipped + 1, last_skipped=True)
    # gradient of the forgotten negative log-likelihood is -(1 - lam) h
    step = np.linalg.solve(hess, (1.0 - lam) * h)
    return replace(state, w=_safeguard(state.w + step), hess=hess, last_skipped=False)


def nr_accumulate(state: NrState, x_new, x_lags) -> NrState:
    """Advance the Hessian over a batch with ``w`` held fixed.

    Used to build the curvature of the training data around the batch fit
    before streaming starts.
    """
    H = nr_gradient(x_new, x_lags, state.w)
    n = H.shape[1]
    lam = state.lam
    weights = (1.0 - lam) * lam ** np.arange(n - 1, -1, -1, dtype=float)
    hess = lam**n * state.hess + (H * weights) @ H.T
    return replace(state, hess=0.5 * (hess + hess.T))


def nr_diagnostics(state: NrState) -> np.ndarray:
    """Eigenvalues of the current Hessian approximation."""
    return np.linalg.eigvalsh(state.hess)
