"""Generalised logit transform and the distributions it induces.

The transform ``L_nu(x) = ln(x**nu / (1 - x**nu))`` maps ``(0, 1)`` onto the
real line. With data squeezed into ``[eps, 1 - eps]`` a Gaussian in the
transformed domain becomes an *inflated* normal: the tail mass beyond
``L_nu(eps)`` and ``L_nu(1 - eps)`` is piled onto the two bounds.

Missing values (NaN) pass through the transforms unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DomainError

__all__ = [
    "GlogitMap",
    "InflatedNormal",
    "PredictiveCdf",
    "glogit_forward",
    "glogit_inverse",
    "glogit_nu_derivative",
    "clamp_threshold",
    "logit_normal_pdf",
    "logit_normal_logpdf",
    "inflated_cdf",
    "predictive_quantile",
    "NU_BOUNDS",
    "DEFAULT_EPS",
]

NU_BOUNDS = (0.1, 3.0)
DEFAULT_EPS = 0.005


def _check_nu(nu):
    if np.any(~(np.asarray(nu, dtype=float) > 0)):
        raise DomainError(f"shape parameter must be positive, got {nu!r}")


def glogit_forward(x, nu):
    """Generalised logit ``ln(x**nu / (1 - x**nu))``.

    Evaluated as ``nu*ln(x) - log1p(-x**nu)`` so that values close to either
    bound keep full precision. NaN entries are propagated.
    """
    _check_nu(nu)
    x = np.asarray(x, dtype=float)
    present = ~np.isnan(x)
    if np.any((x[present] <= 0) | (x[present] >= 1)):
        raise DomainError("glogit_forward requires 0 < x < 1")
    with np.errstate(invalid="ignore", divide="ignore"):
        a = nu * np.log(x)
        out = a - np.log1p(-np.exp(a))
    return out[()] if out.ndim == 0 else out


def glogit_inverse(y, nu):
    """Inverse transform ``(e^y / (1 + e^y))**(1/nu)``.

    Uses ``log(sigmoid(y)) = -logaddexp(0, -y)`` so that ``e^y`` is never
    formed; stable for ``|y|`` in the hundreds.
    """
    _check_nu(nu)
    y = np.asarray(y, dtype=float)
    out = np.exp(-np.logaddexp(0.0, -y) / nu)
    return out[()] if out.ndim == 0 else out


def glogit_nu_derivative(x, nu):
    """d L_nu(x) / d nu = ln(x) / (1 - x**nu)."""
    x = np.asarray(x, dtype=float)
    lx = np.log(x)
    return lx / -np.expm1(nu * lx)


def clamp_threshold(x, eps=DEFAULT_EPS):
    """Squeeze values in ``[0, 1]`` into ``[eps, 1 - eps]``."""
    x = np.asarray(x, dtype=float)
    present = ~np.isnan(x)
    if np.any((x[present] < 0) | (x[present] > 1)):
        raise DomainError("clamp_threshold requires 0 <= x <= 1")
    out = np.clip(x, eps, 1.0 - eps)
    return out[()] if out.ndim == 0 else out


def logit_normal_logpdf(x, mu, sigma, nu):
    """Log density of ``X`` when ``L_nu(X) ~ N(mu, sigma**2)``."""
    if np.any(np.asarray(sigma) <= 0):
        raise DomainError("sigma must be positive")
    x = np.asarray(x, dtype=float)
    y = glogit_forward(x, nu)
    log_jac = np.log(nu) - np.log(x) - np.log1p(-np.exp(nu * np.log(x)))
    return stats.norm.logpdf(y, loc=mu, scale=sigma) + log_jac


def logit_normal_pdf(x, mu, sigma, nu):
    """Density of the generalised logit-normal distribution on ``(0, 1)``."""
    return np.exp(logit_normal_logpdf(x, mu, sigma, nu))


@dataclass(frozen=True)
class GlogitMap:
    """Transform between ``[eps, 1 - eps]`` and the unbounded domain."""

    nu: float = 1.0
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")
        if not 0 < self.eps < 0.5:
            raise DomainError(f"eps must lie in (0, 0.5), got {self.eps}")

    def forward(self, x):
        return glogit_forward(x, self.nu)

    def inverse(self, y):
        return glogit_inverse(y, self.nu)

    @property
    def lo(self) -> float:
        return float(glogit_forward(self.eps, self.nu))

    @property
    def hi(self) -> float:
        return float(glogit_forward(1.0 - self.eps, self.nu))

    def with_nu(self, nu: float) -> GlogitMap:
        return GlogitMap(nu=float(nu), eps=self.eps)


def _std_cdf(z, df):
    if df is None:
        return special.ndtr(z)
    return stats.t.cdf(z, df)


def _std_ppf(q, df):
    if df is None:
        return special.ndtri(q)
    return stats.t.ppf(q, df)


@dataclass(frozen=True)
class InflatedNormal:
    """Gaussian whose tails beyond ``[lo, hi]`` collapse onto the bounds.

    ``sigma == 0`` is accepted and gives a point mass at ``mu`` (clipped into
    the support). Setting ``df`` swaps the Gaussian kernel for a Student-t.
    """

    mu: float
    sigma: float
    lo: float
    hi: float
    df: float | None = None

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError("InflatedNormal requires lo < hi")
        if not self.sigma >= 0:
            raise DomainError("sigma must be nonnegative")

    def _kernel_cdf(self, y):
        y = np.asarray(y, dtype=float)
        if self.sigma == 0:
            return (y >= self.mu).astype(float)
        return _std_cdf((y - self.mu) / self.sigma, self.df)

    @property
    def mass_lo(self) -> float:
        return float(self._kernel_cdf(self.lo))

    @property
    def mass_hi(self) -> float:
        if self.sigma == 0:
            return float(self.mu >= self.hi)
        return float(_std_cdf(-(self.hi - self.mu) / self.sigma, self.df))

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        out = np.where(y < self.lo, 0.0, np.where(y >= self.hi, 1.0, self._kernel_cdf(y)))
        return out[()] if out.ndim == 0 else out

    def quantile(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any((tau <= 0) | (tau >= 1)):
            raise DomainError("quantile level must lie in (0, 1)")
        if self.sigma == 0:
            inner = np.full(tau.shape, self.mu)
        else:
            inner = self.mu + self.sigma * _std_ppf(tau, self.df)
        out = np.where(
            tau <= self.mass_lo, self.lo, np.where(tau > 1.0 - self.mass_hi, self.hi, inner)
        )
        out = np.clip(out, self.lo, self.hi)
        return out[()] if out.ndim == 0 else out


def inflated_cdf(dist: InflatedNormal, y):
    """Piecewise CDF: 0 below ``lo``, kernel CDF on ``[lo, hi)``, 1 from ``hi``."""
    return dist.cdf(y)


@dataclass(frozen=True)
class PredictiveCdf:
    """Forecast distribution on the original ``[eps, 1 - eps]`` scale.

    ``base`` lives in the transformed domain of ``map``. When ``map`` is None
    the base distribution is already on the original scale (persistence) and
    its ``lo``/``hi`` must equal ``eps``/``1 - eps``.
    """

    base: InflatedNormal
    map: GlogitMap | None = None

    @property
    def eps(self) -> float:
        return self.map.eps if self.map is not None else self.base.lo

    @property
    def nu(self) -> float:
        return self.map.nu if self.map is not None else float("nan")

    @property
    def mass_lo(self) -> float:
        return self.base.mass_lo

    @property
    def mass_hi(self) -> float:
        return self.base.mass_hi

    def _to_base(self, x):
        if self.map is None:
            return np.asarray(x, dtype=float)
        eps = self.eps
        x = np.asarray(x, dtype=float)
        inside = (x >= eps) & (x <= 1 - eps)
        y = np.where(x < eps, -np.inf, np.inf)
        if np.any(inside):
            y = np.where(inside, glogit_forward(np.where(inside, x, 0.5), self.map.nu), y)
        return y

    def cdf(self, x):
        """Right-continuous CDF; 0 below ``eps`` and 1 from ``1 - eps``."""
        x = np.asarray(x, dtype=float)
        eps = self.eps
        out = np.where(x >= 1 - eps, 1.0, np.where(x < eps, 0.0, self.base.cdf(self._to_base(x))))
        # the transformed bounds round-trip only to ~1 ulp
        out = np.where((x >= eps) & (x < 1 - eps), np.maximum(out, self.mass_lo), out)
        return out[()] if out.ndim == 0 else out

    def cdf_left(self, x):
        """Left limit ``F(x-)``; differs from ``cdf`` only at the bounds."""
        x = np.asarray(x, dtype=float)
        out = np.where(x <= self.eps, 0.0, np.where(x >= 1 - self.eps, 1.0 - self.mass_hi, self.cdf(x)))
        return out[()] if out.ndim == 0 else out

    def quantile(self, tau):
        """Generalised inverse of the CDF; mass points absorb their levels."""
        tau = np.asarray(tau, dtype=float)
        if np.any((tau <= 0) | (tau >= 1)):
            raise DomainError("quantile level must lie in (0, 1)")
        eps = self.eps
        yq = self.base.quantile(tau)
        xq = yq if self.map is None else glogit_inverse(yq, self.map.nu)
        out = np.where(
            tau <= self.mass_lo, eps, np.where(tau > 1.0 - self.mass_hi, 1.0 - eps, xq)
        )
        out = np.clip(out, eps, 1.0 - eps)
        return out[()] if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.uniform(size=size)
        u = np.clip(u, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
        return self.quantile(u)

    def median(self) -> float:
        return float(self.quantile(0.5))


def predictive_quantile(cdf: PredictiveCdf, tau):
    """Smallest ``x`` in ``[eps, 1 - eps]`` with ``cdf(x) >= tau``."""
    return cdf.quantile(tau)
