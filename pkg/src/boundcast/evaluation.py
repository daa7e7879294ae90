"""Scoring of probabilistic forecasts on the bounded original scale.

CRPS is integrated numerically over ``[eps, 1 - eps]``; the integrand is
split at the observation and at a ladder of forecast quantiles so that each
Gauss-Legendre panel sees a smooth piece of the CDF.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DomainError, InsufficientDataError
from .forecast import LEVELS, METHODS, ForecastStream, stream_from_cdfs
from .glogit import PredictiveCdf

SPLIT_LEVELS = np.array([1e-6, 1e-3, 0.02, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 0.98, 0.999, 1 - 1e-6])
GL_NODES = 64


def _as_stream(forecasts, observations=None) -> ForecastStream:
    if isinstance(forecasts, ForecastStream):
        if observations is not None:
            from dataclasses import replace

            return replace(forecasts, obs=np.asarray(observations, dtype=float))
        return forecasts
    if isinstance(forecasts, PredictiveCdf):
        forecasts = [forecasts]
    forecasts = list(forecasts)
    eps = forecasts[0].eps if forecasts else 0.005
    obs = np.atleast_1d(np.asarray(observations, dtype=float))
    return stream_from_cdfs("", np.arange(len(forecasts)), forecasts, obs, eps)


def _params(s: ForecastStream, sel=slice(None)):
    col = lambda a: np.asarray(a)[sel][:, None]  # noqa: E731
    df = None
    if s.df is not None and np.any(np.isfinite(s.df[sel])):
        df = col(s.df)
    return col(s.mu), col(s.sigma), col(s.lo), col(s.hi), col(s.nu), df


def _kernel(t, mu, sigma, df):
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (t - mu) / sigma
    if df is None:
        F = special.ndtr(z)
    else:
        F = np.where(np.isfinite(df), stats.t.cdf(z, np.where(np.isfinite(df), df, 1.0)), special.ndtr(z))
    return np.where(sigma > 0, F, (t >= mu).astype(float))


def cdf_values(s: ForecastStream, z, sel=slice(None)):
    """CDF of each forecast row at the matching row of ``z`` (original scale)."""
    mu, sigma, lo, hi, nu, df = _params(s, sel)
    eps = s.eps
    z = np.asarray(z, dtype=float)
    inside = (z >= eps) & (z < 1 - eps)
    zi = np.where(inside, z, 0.5)
    ident = np.isnan(nu)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(ident, 1.0, nu) * np.log(zi)
        t = np.where(ident, zi, a - np.log(-np.expm1(a)))
    F = _kernel(t, mu, sigma, df)
    F = np.maximum(F, _kernel(lo, mu, sigma, df))
    return np.where(z >= 1 - eps, 1.0, np.where(z < eps, 0.0, F))


def quantile_values(s: ForecastStream, tau, sel=slice(None)):
    """Quantiles ``(n, K)`` at levels ``tau`` for each forecast row."""
    mu, sigma, lo, hi, nu, df = _params(s, sel)
    tau = np.asarray(tau, dtype=float)[None, :]
    k = special.ndtri(tau) if df is None else np.where(np.isfinite(df), stats.t.ppf(tau, np.where(np.isfinite(df), df, 1.0)), special.ndtri(tau))
    t = np.clip(mu + sigma * k, lo, hi)
    ident = np.isnan(nu)
    x = np.where(ident, t, np.exp(-np.logaddexp(0.0, -t) / np.where(ident, 1.0, nu)))
    return np.clip(x, s.eps, 1 - s.eps)


def crps_values(forecasts, observations=None, nodes: int = GL_NODES, chunk: int = 2048) -> np.ndarray:
    """CRPS of every forecast/observation pair, integrated over ``[eps, 1-eps]``.

    Uses ``1{z >= y}`` for the observation step. Accepts a
    :class:`ForecastStream` or a sequence of :class:`PredictiveCdf`.
    """
    s = _as_stream(forecasts, observations)
    eps = s.eps
    y = s.obs
    if np.any((y < eps - 1e-12) | (y > 1 - eps + 1e-12)):
        raise DomainError("observations must lie in [eps, 1 - eps]")
    y = np.clip(y, eps, 1 - eps)
    xi, wi = np.polynomial.legendre.leggauss(nodes)
    out = np.empty(y.size)
    for start in range(0, y.size, chunk):
        sel = slice(start, min(start + chunk, y.size))
        n = sel.stop - sel.start
        q = quantile_values(s, SPLIT_LEVELS, sel)
        bp = np.concatenate([np.full((n, 1), eps), q, y[sel, None], np.full((n, 1), 1 - eps)], axis=1)
        bp = np.sort(bp, axis=1)
        a, b = bp[:, :-1], bp[:, 1:]
        half = 0.5 * (b - a)
        z = (a + half)[:, :, None] + half[:, :, None] * xi[None, None, :]
        ind = ((a + half) >= y[sel, None]).astype(float)[:, :, None]
        F = cdf_values(s, z.reshape(n, -1), sel).reshape(z.shape)
        out[sel] = (((F - ind) ** 2 * wi).sum(axis=2) * half).sum(axis=1)
    return out


def crps_single(cdf: PredictiveCdf, y: float, nodes: int = GL_NODES) -> float:
    """CRPS of one forecast against one observation in ``[eps, 1 - eps]``."""
    if not cdf.eps - 1e-12 <= y <= 1 - cdf.eps + 1e-12:
        raise DomainError(f"observation {y} outside the support [{cdf.eps}, {1 - cdf.eps}]")
    return float(crps_values([cdf], [y], nodes)[0])


def crps_mean(forecasts, observations=None) -> float:
    """Average CRPS over the emitted (non-skipped) pairs."""
    if isinstance(forecasts, ForecastStream) and observations is None:
        vals = crps_values(forecasts)
    else:
        pairs = [(f, o) for f, o in zip(forecasts, observations) if f is not None and not np.isnan(o)]
        if not pairs:
            raise InsufficientDataError("no forecast/observation pairs to score")
        vals = crps_values([f for f, _ in pairs], [o for _, o in pairs])
    if vals.size == 0:
        raise InsufficientDataError("no forecast/observation pairs to score")
    return float(vals.mean())


def skill(crps_method: float, crps_persistence: float) -> float:
    """Relative CRPS improvement over persistence (ideal CRPS is 0)."""
    if not crps_persistence > 0:
        raise ZeroDivisionError("benchmark CRPS must be positive")
    return (crps_persistence - crps_method) / crps_persistence


def rank_table(per_scenario_crps, methods=METHODS) -> np.ndarray:
    """Counts of each rank (columns 1..K) per method (rows).

    ``per_scenario_crps`` is an iterable of ``{method: crps}`` mappings; ties
    go to the method listed first in ``methods``.
    """
    methods = list(methods)
    counts = np.zeros((len(methods), len(methods)), dtype=int)
    for scen in per_scenario_crps:
        present = [m for m in methods if m in scen]
        order = sorted(present, key=lambda m: (scen[m], methods.index(m)))
        for r, m in enumerate(order):
            counts[methods.index(m), r] += 1
    return counts


def pit_values(forecasts, observations=None, seed: int = 0) -> np.ndarray:
    """Probability integral transform, randomised on the boundary masses."""
    s = _as_stream(forecasts, observations)
    y = s.obs
    eps = s.eps
    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.uniform(size=y.size)
    F = cdf_values(s, y[:, None])[:, 0]
    at_lo = y <= eps
    at_hi = y >= 1 - eps
    if np.any(at_hi):
        left = cdf_values(s, np.full((y.size, 1), np.nextafter(1 - eps, 0)))[:, 0]
        F = np.where(at_hi, left + u * (1 - left), F)
    return np.where(at_lo, u * F, F)


def reliability_curve(forecasts, observations=None, levels=LEVELS, seed: int = 0, min_pairs: int = 100) -> np.ndarray:
    """Observed proportion of outcomes at or below each nominal quantile."""
    s = _as_stream(forecasts, observations)
    if len(s) < min_pairs:
        raise InsufficientDataError(f"reliability needs at least {min_pairs} pairs, got {len(s)}")
    pit = np.sort(pit_values(s, seed=seed))
    return np.searchsorted(pit, np.asarray(levels), side="right") / pit.size


@dataclass(frozen=True)
class Envelope:
    median: np.ndarray
    central_lo: np.ndarray
    central_hi: np.ndarray
    outer_lo: np.ndarray
    outer_hi: np.ndarray
    outliers: np.ndarray  # indices of flagged curves


def functional_envelope(curves, inflate: float = 1.5, outlier_fraction: float = 0.1, min_curves: int = 5) -> Envelope:
    """Pointwise summary of a set of curves.

    Median curve, 25-75% band, and the min-max range of non-outlying curves.
    A curve is an outlier when it leaves the band inflated by ``inflate``
    band widths at more than ``outlier_fraction`` of the levels.
    """
    C = np.asarray(curves, dtype=float)
    if C.ndim != 2 or C.shape[0] < min_curves:
        raise InsufficientDataError(f"need at least {min_curves} curves")
    q25, med, q75 = np.percentile(C, [25, 50, 75], axis=0)
    iqr = q75 - q25
    lo_f, hi_f = q25 - inflate * iqr, q75 + inflate * iqr
    tol = 1e-12
    outside = (C < lo_f - tol) | (C > hi_f + tol)
    flagged = outside.mean(axis=1) > outlier_fraction
    keep = C[~flagged] if np.any(~flagged) else C
    return Envelope(med, q25, q75, keep.min(axis=0), keep.max(axis=0), np.flatnonzero(flagged))


def binomial_band(levels, n: int, z: float = 2.5758293035489) -> tuple[np.ndarray, np.ndarray]:
    levels = np.asarray(levels, dtype=float)
    half = z * np.sqrt(levels * (1 - levels) / n)
    return levels - half, levels + half


# -- report serialisation ------------------------------------------------------


def write_table_csv(path, header, rows) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])


def write_curves_json(path, curves: dict, levels=LEVELS) -> None:
    payload = {"levels": [round(float(v), 6) for v in levels], "curves": {k: [round(float(v), 10) for v in c] for k, c in curves.items()}}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
