"""One-step-ahead probabilistic forecasters for the seven methods.

Every forecaster consumes observations on the original ``[eps, 1 - eps]``
scale in time order. :meth:`Forecaster.step` first issues the forecast for
the incoming time from the current state and only then learns from the
realised value, so a forecast never sees its own target.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import bayes, bayes_nu, newton, rls
from .armodel import ArState, LagDesign, build_lag_design, fit_ar_lnu, ols_fit, transform_design
from .errors import InsufficientDataError, ParameterError
from .glogit import DEFAULT_EPS, NU_BOUNDS, GlogitMap, InflatedNormal, PredictiveCdf, glogit_forward

METHODS = ("Persistence", "AR-L", "AR-Lnu", "RLS", "NR", "Bayes", "Bayes-nu")
ADAPTIVE = ("RLS", "NR", "Bayes", "Bayes-nu")
LEVELS = np.round(np.arange(1, 200, 2) / 200.0, 4)  # 0.005 ... 0.995


@dataclass(frozen=True)
class Hyperparams:
    eps: float = DEFAULT_EPS
    lam: float = 0.9999
    guard: float = 0.1
    prior_scale: float = 1e-4
    alpha0: float = 101.0
    beta0: float = 1.0
    lambda_theta: float = 0.995
    lambda_z: float = 0.995
    gamma: float = 0.05
    nu_bounds: tuple[float, float] = NU_BOUNDS
    nu_window: int = 500
    nu_profile_theta: bool = False
    swap_variance_weights: bool = True
    student_t: bool = False
    nr_warm_start: bool = True


class Forecaster:
    """Base class: keeps the lag buffer and the forecast/update ordering."""

    method: str = ""
    adaptive: bool = False

    def __init__(self, p: int, eps: float, history=()):
        self.p = p
        self.eps = eps
        self.lags = np.full(p, np.nan)  # most recent first
        for x in history:
            self._push(x)

    def _push(self, x):
        self.lags = np.roll(self.lags, 1)
        self.lags[0] = x

    def predict(self, lags) -> PredictiveCdf:
        raise NotImplementedError

    def update(self, x_new: float, lags) -> None:
        """Learn from ``x_new`` given its lags; static methods ignore it."""

    def step(self, new_obs: float) -> PredictiveCdf | None:
        """Forecast for the incoming time, then update with ``new_obs``.

        Returns None (skipped) when the observation is missing or the lag
        window is incomplete; in that case nothing is learned.
        """
        lags = self.lags
        out = None
        if not np.isnan(new_obs) and not np.isnan(lags).any():
            out = self.predict(lags)
            self.update(float(new_obs), lags)
        self._push(new_obs)
        return out

    @property
    def nu(self) -> float:
        return float("nan")


class Persistence(Forecaster):
    """Inflated Gaussian centred on the last value, on the original scale."""

    method = "Persistence"

    def __init__(self, sigma2: float, eps: float = DEFAULT_EPS, history=()):
        super().__init__(1, eps, history)
        self.sigma2 = sigma2

    def predict(self, lags):
        return persistence_forecast(lags[0], self.sigma2, self.eps)


def persistence_forecast(last_x: float, sigma2_resid: float, eps: float = DEFAULT_EPS) -> PredictiveCdf:
    if not sigma2_resid > 0:
        raise ParameterError("persistence variance must be positive")
    return PredictiveCdf(InflatedNormal(float(last_x), float(np.sqrt(sigma2_resid)), eps, 1.0 - eps))


def _transformed_forecast(mean: float, var: float, m: GlogitMap, df=None) -> PredictiveCdf:
    return PredictiveCdf(InflatedNormal(float(mean), float(np.sqrt(var)), m.lo, m.hi, df), m)


class StaticAR(Forecaster):
    """AR fitted once on transformed training data (AR-L / AR-Lnu)."""

    def __init__(self, state: ArState, nu: float, eps=DEFAULT_EPS, history=(), method="AR-Lnu"):
        super().__init__(state.p, eps, history)
        self.state = state
        self.map = GlogitMap(nu, eps)
        self.method = method

    def predict(self, lags):
        b = np.concatenate([[1.0], self.map.forward(lags)])
        return _transformed_forecast(b @ self.state.theta, self.state.sigma2, self.map)

    @property
    def nu(self):
        return self.map.nu


class RlsForecaster(Forecaster):
    method = "RLS"
    adaptive = True

    def __init__(self, state: rls.RlsState, nu: float, eps=DEFAULT_EPS, history=()):
        super().__init__(state.p, eps, history)
        self.state = state
        self.map = GlogitMap(nu, eps)

    def _mean(self, lags):
        b = np.concatenate([[1.0], self.map.forward(lags)])
        return b, float(b @ self.state.theta)

    def predict(self, lags):
        _, mean = self._mean(lags)
        return _transformed_forecast(mean, self.state.sigma2, self.map)

    def update(self, x_new, lags):
        b, mean = self._mean(lags)
        y_obs = float(self.map.forward(x_new))
        y_hat = float(self.map.inverse(mean))
        state = rls.rls_update(self.state, LagDesign(np.array([y_obs]), b[:, None]))
        self.state = rls.rls_variance_update(state, y_hat, y_obs, mean)

    @property
    def nu(self):
        return self.map.nu


class NrForecaster(Forecaster):
    method = "NR"
    adaptive = True

    def __init__(self, state: newton.NrState, eps=DEFAULT_EPS, history=()):
        super().__init__(state.p, eps, history)
        self.state = state

    def predict(self, lags):
        m = GlogitMap(self.state.nu, self.eps)
        b = np.concatenate([[1.0], m.forward(lags)])
        return _transformed_forecast(b @ self.state.theta, self.state.sigma2, m)

    def update(self, x_new, lags):
        self.state = newton.nr_update(self.state, x_new, lags)

    @property
    def nu(self):
        return self.state.nu


class BayesForecaster(Forecaster):
    """Conjugate Bayesian AR; with ``adapt_nu`` the shape follows the data.

    The shape step sees the most recent ``nu_config.window`` observations as
    its new-data batch; ``window_seed`` (targets, lags) pre-fills that buffer,
    typically with the tail of the training data.
    """

    adaptive = True

    def __init__(self, state: bayes.BayesState, adapt_nu: bool = False, nu_config=None, student_t=False, history=(), window_seed=None):
        super().__init__(state.p, state.eps, history)
        self.state = state
        self.adapt_nu = adapt_nu
        self.nu_config = nu_config or bayes_nu.NuUpdateConfig()
        self.student_t = student_t
        self.method = "Bayes-nu" if adapt_nu else "Bayes"
        W = self.nu_config.window
        self._wx = np.empty(W)
        self._wl = np.empty((state.p, W))
        self._wn = 0
        if window_seed is not None:
            tx, tl = window_seed
            for j in range(max(tx.size - W, 0), tx.size):
                self._remember(tx[j], tl[:, j])

    def _remember(self, x, lags):
        j = self._wn % self._wx.size
        self._wx[j] = x
        self._wl[:, j] = lags
        self._wn += 1

    def predict(self, lags):
        return bayes.bayes_predictive(self.state, glogit_forward(lags, self.state.nu), self.student_t)

    def update(self, x_new, lags):
        self.state = bayes_update_step(self.state, np.array([x_new]), np.asarray(lags)[:, None], False, self.nu_config)
        if self.adapt_nu:
            self._remember(x_new, lags)
            k = min(self._wn, self._wx.size)
            self.state = bayes_nu.nu_step(self.state, self._wx[:k], self._wl[:, :k], self.nu_config)

    @property
    def nu(self):
        return self.state.nu


def bayes_update_step(state, x_new, x_lags, adapt_nu, nu_config):
    """Decay, conjugate update on the current transform, then optional shape step."""
    M = x_new.size
    design = LagDesign(
        glogit_forward(x_new, state.nu),
        np.vstack([np.ones((1, M)), glogit_forward(x_lags, state.nu).reshape(-1, M)]),
    )
    state = bayes.bayes_update(bayes.bayes_decay(state, M), design)
    if adapt_nu:
        state = bayes_nu.nu_step(state, x_new, x_lags, nu_config)
    return state


# -- training -------------------------------------------------------------------


@dataclass
class TrainedModels:
    p: int
    forecasters: dict
    nu_lnu: float
    ar_lnu: ArState
    persistence_sigma2: float
    diagnostics: dict = field(default_factory=dict)


def persistence_variance(x) -> float:
    x = np.asarray(x, dtype=float)
    d = np.diff(x)
    d = d[~np.isnan(d)]
    if d.size < 2:
        raise InsufficientDataError("not enough consecutive pairs for persistence variance")
    return float(max(np.var(d, ddof=1), 1e-12))


def train_models(train_x, p: int, hp: Hyperparams = Hyperparams(), methods=METHODS, history=None) -> TrainedModels:
    """Fit every requested method on one training series.

    ``train_x`` is on the original bounded scale with NaN for missing. The
    lag buffers are seeded with the tail of ``history`` (default: the
    training series itself), i.e. the test period is assumed to follow on.
    """
    train_x = np.asarray(train_x, dtype=float)
    tail = (train_x if history is None else np.asarray(history, dtype=float))[-p:]
    dx = build_lag_design(train_x, p)
    ar_lnu, nu = fit_ar_lnu(dx, hp.nu_bounds)
    out = {}
    diag = {"nu_lnu": nu, "theta_lnu": ar_lnu.theta.tolist(), "sigma2_lnu": ar_lnu.sigma2, "n_pairs": dx.n}
    s2p = persistence_variance(train_x)
    for method in methods:
        if method == "Persistence":
            out[method] = Persistence(s2p, hp.eps, history=tail[-1:])
        elif method == "AR-L":
            out[method] = StaticAR(ols_fit(transform_design(dx, 1.0)), 1.0, hp.eps, tail, method="AR-L")
        elif method == "AR-Lnu":
            out[method] = StaticAR(ar_lnu, nu, hp.eps, tail, method="AR-Lnu")
        elif method == "RLS":
            st = rls.rls_init(transform_design(dx, nu), hp.lam, hp.guard, swap_variance_weights=hp.swap_variance_weights)
            out[method] = RlsForecaster(st, nu, hp.eps, tail)
        elif method == "NR":
            st = newton.nr_init(ar_lnu.theta, ar_lnu.sigma2, nu, hp.lam)
            if hp.nr_warm_start:
                st = newton.nr_accumulate(st, dx.targets, dx.predictors[1:])
            out[method] = NrForecaster(st, hp.eps, tail)
        elif method in ("Bayes", "Bayes-nu"):
            adapt = method == "Bayes-nu"
            st = bayes.bayes_init(
                p, hp.prior_scale, hp.alpha0, hp.beta0, nu, hp.lambda_theta, hp.lambda_z, mu0=ar_lnu.theta, eps=hp.eps
            )
            cfg = bayes_nu.NuUpdateConfig(gamma=hp.gamma, nu_bounds=hp.nu_bounds, window=hp.nu_window, profile_theta=hp.nu_profile_theta)
            st = bayes_update_step(st, dx.targets, dx.predictors[1:], adapt, cfg)
            seed = (dx.targets, dx.predictors[1:]) if adapt else None
            out[method] = BayesForecaster(st, adapt, cfg, hp.student_t, tail, window_seed=seed)
        else:
            raise ParameterError(f"unknown method {method!r}")
    return TrainedModels(p, out, nu, ar_lnu, s2p, diag)


# -- streaming --------------------------------------------------------------


@dataclass
class ForecastStream:
    """Parameters of every emitted forecast, one row per issued time step.

    ``nu`` is NaN for forecasts made directly on the original scale.
    """

    method: str
    time: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    nu: np.ndarray
    eps: float
    obs: np.ndarray
    df: np.ndarray | None = None

    def __len__(self):
        return self.time.size

    def cdf_at(self, i: int) -> PredictiveCdf:
        df = None if self.df is None or not np.isfinite(self.df[i]) else float(self.df[i])
        base = InflatedNormal(float(self.mu[i]), float(self.sigma[i]), float(self.lo[i]), float(self.hi[i]), df)
        m = None if np.isnan(self.nu[i]) else GlogitMap(float(self.nu[i]), self.eps)
        return PredictiveCdf(base, m)

    def cdfs(self):
        return [self.cdf_at(i) for i in range(len(self))]

    def subset(self, sel) -> ForecastStream:
        return replace(
            self,
            time=self.time[sel],
            mu=self.mu[sel],
            sigma=self.sigma[sel],
            lo=self.lo[sel],
            hi=self.hi[sel],
            nu=self.nu[sel],
            obs=self.obs[sel],
            df=None if self.df is None else self.df[sel],
        )


def stream_from_cdfs(method: str, times, cdfs, obs, eps: float) -> ForecastStream:
    n = len(cdfs)
    arr = lambda f: np.fromiter((f(c) for c in cdfs), float, n)  # noqa: E731
    return ForecastStream(
        method,
        np.asarray(times),
        arr(lambda c: c.base.mu),
        arr(lambda c: c.base.sigma),
        arr(lambda c: c.base.lo),
        arr(lambda c: c.base.hi),
        arr(lambda c: c.nu),
        eps,
        np.asarray(obs, dtype=float),
        arr(lambda c: np.inf if c.base.df is None else c.base.df),
    )


def run_stream(forecaster: Forecaster, test_x, times=None, track_nu: bool = False):
    """Feed ``test_x`` through ``forecaster`` and collect the emitted forecasts.

    Returns the :class:`ForecastStream`, plus the per-step shape parameter
    when ``track_nu`` is set.
    """
    test_x = np.asarray(test_x, dtype=float)
    times = np.arange(test_x.size) if times is None else np.asarray(times)
    cdfs, keep, nus = [], [], []
    for i, x in enumerate(test_x):
        c = forecaster.step(x)
        if c is not None:
            cdfs.append(c)
            keep.append(i)
        if track_nu:
            nus.append(forecaster.nu)
    keep = np.asarray(keep, dtype=int)
    s = stream_from_cdfs(forecaster.method, times[keep], cdfs, test_x[keep], forecaster.eps)
    return (s, np.asarray(nus)) if track_nu else s


def write_forecast_csv(path, stream: ForecastStream, levels=LEVELS) -> None:
    """Forecast stream as CSV: time, method, quantiles, masses, mu, sigma, nu, observation."""
    header = ["time", "method"] + [f"q{lv * 100:.1f}" for lv in levels] + ["mass_lo", "mass_hi", "mu", "sigma", "nu", "lo", "hi", "observation"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(stream)):
            c = stream.cdf_at(i)
            row = [str(stream.time[i]), stream.method]
            row += [f"{q:.8f}" for q in c.quantile(levels)]
            row += [f"{v:.10g}" for v in (c.mass_lo, c.mass_hi, stream.mu[i], stream.sigma[i])]
            row += ["" if np.isnan(stream.nu[i]) else f"{stream.nu[i]:.10g}"]
            row += [f"{stream.lo[i]:.17g}", f"{stream.hi[i]:.17g}", f"{stream.obs[i]:.10g}"]
            w.writerow(row)


def read_forecast_csv(path, eps: float = DEFAULT_EPS) -> ForecastStream:
    import pandas as pd

    df = pd.read_csv(path, dtype={"time": str})
    return ForecastStream(
        str(df["method"].iloc[0]) if len(df) else "",
        df["time"].to_numpy(),
        df["mu"].to_numpy(float),
        df["sigma"].to_numpy(float),
        df["lo"].to_numpy(float),
        df["hi"].to_numpy(float),
        df["nu"].to_numpy(float),
        eps,
        df["observation"].to_numpy(float),
    )
