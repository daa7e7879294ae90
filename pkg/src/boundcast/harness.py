"""Experiment orchestration over a directory of farm files.

A run trains every requested method on one year, streams the following
year through the forecasters and scores the emitted forecasts. All reports
are written in a fixed order with fixed float formatting so that reruns are
byte-identical.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, bayes_nu
from .armodel import select_order
from .datapipe import (
    WINDOW_3M,
    available_years,
    build_scenarios,
    estimate_capacity,
    load_farm,
    outlier_farm_filter,
    read_manifest,
    to_bounded,
    year_slice,
)
from .errors import InsufficientDataError, ParameterError
from .evaluation import (
    crps_values,
    functional_envelope,
    rank_table,
    reliability_curve,
    skill,
    write_table_csv,
)
from .forecast import (
    ADAPTIVE,
    LEVELS,
    METHODS,
    BayesForecaster,
    Hyperparams,
    NrForecaster,
    RlsForecaster,
    TrainedModels,
    run_stream,
    train_models,
    write_forecast_csv,
)
from .glogit import GlogitMap, glogit_forward

log = logging.getLogger(__name__)

SENSITIVITY_TARGETS = ("mu", "sigma2", "P", "nu")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run; flat so it maps onto CLI flags."""

    data_dir: str = "data"
    out_dir: str = "runs/default"
    farms: tuple = ()  # empty means every farm in the manifest
    scenarios: tuple = ()  # train years; empty means all consecutive pairs
    methods: tuple = METHODS
    p: int = 0  # 0 selects the order from the PACF
    p_min: int = 1
    p_max: int = 6
    eps: float = 0.005
    lam: float = 0.9999
    guard: float = 0.1
    prior_scale: float = 1e-4
    alpha0: float = 101.0
    beta0: float = 1.0
    lambda_theta: float = 0.995
    lambda_z: float = 0.995
    gamma: float = 0.05
    nu_min: float = 0.1
    nu_max: float = 3.0
    nu_window: int = 500
    swap_variance_weights: bool = True
    student_t: bool = False
    seed: int = 0
    workers: int = 1
    write_forecasts: bool = False
    filter_outliers: bool = True
    n_draws: int = 200
    magnitude: float = 0.1
    sensitivity_methods: tuple = ("NR", "Bayes-nu")
    sensitivity_targets: tuple = SENSITIVITY_TARGETS

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ParameterError(f"unknown methods {sorted(unknown)}")
        if not 1 <= self.p_min <= self.p_max:
            raise ParameterError("need 1 <= p_min <= p_max")
        if self.workers < 1:
            raise ParameterError("workers must be at least 1")

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            eps=self.eps,
            lam=self.lam,
            guard=self.guard,
            prior_scale=self.prior_scale,
            alpha0=self.alpha0,
            beta0=self.beta0,
            lambda_theta=self.lambda_theta,
            lambda_z=self.lambda_z,
            gamma=self.gamma,
            nu_bounds=(self.nu_min, self.nu_max),
            nu_window=self.nu_window,
            swap_variance_weights=self.swap_variance_weights,
            student_t=self.student_t,
        )

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def overrides(self) -> dict:
        """Fields that differ from the defaults."""
        base = RunConfig()
        return {f.name: self.to_dict()[f.name] for f in fields(self) if getattr(self, f.name) != getattr(base, f.name)}


def parse_value(text: str, like):
    """Convert ``text`` to the type of the default value ``like``."""
    if isinstance(like, bool):
        low = text.strip().lower()
        if low not in ("1", "0", "true", "false", "yes", "no"):
            raise ParameterError(f"not a boolean: {text!r}")
        return low in ("1", "true", "yes")
    if isinstance(like, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if like and isinstance(like[0], int):
            return tuple(int(t) for t in items)
        return tuple(items)
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def config_from_pairs(pairs: dict, base: RunConfig | None = None) -> RunConfig:
    """Apply ``{field: text}`` overrides to ``base`` (defaults when omitted)."""
    base = base or RunConfig()
    known = {f.name for f in fields(RunConfig)}
    changes = {}
    for k, v in pairs.items():
        key = k.replace("-", "_")
        if key not in known:
            raise ParameterError(f"unknown config key {k!r}")
        default = getattr(RunConfig(), key)
        if key == "scenarios":
            default = (0,)
        changes[key] = parse_value(v, default) if isinstance(v, str) else v
    return replace(base, **changes)


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# -- per-farm work ------------------------------------------------------------


def _isoformat(index) -> np.ndarray:
    return np.asarray(index.strftime("%Y-%m-%dT%H:%M:%SZ"))


def _selected_farms(cfg: RunConfig) -> list[dict]:
    farms = read_manifest(cfg.data_dir)["farms"]
    if cfg.farms:
        wanted = set(cfg.farms)
        missing = wanted - {f["id"] for f in farms}
        if missing:
            raise ParameterError(f"farms not in the manifest: {sorted(missing)}")
        farms = [f for f in farms if f["id"] in wanted]
    return sorted(farms, key=lambda f: f["id"])


def _filter_farm(cfg: RunConfig, series) -> dict:
    if not cfg.filter_outliers:
        return {"keep": True, "checked": False}
    try:
        res = outlier_farm_filter(series.to_numpy(), WINDOW_3M)
    except InsufficientDataError as exc:
        log.info("filter not applied: %s", exc)
        return {"keep": True, "checked": False}
    return {"keep": bool(res.keep), "checked": True, "rolling_max_var": res.rolling_max_var, "quantile_width": res.quantile_width}


def _farm_scenarios(cfg: RunConfig, series) -> list[tuple[int, int]]:
    scen = build_scenarios(available_years(series))
    if cfg.scenarios:
        scen = [s for s in scen if s[0] in set(cfg.scenarios)]
    return scen


def prepare_scenario(cfg: RunConfig, series, train_year: int, test_year: int):
    """Bounded train and test arrays, capacity, test timestamps and AR order."""
    train_mw = year_slice(series, train_year)
    test_mw = year_slice(series, test_year)
    cap = estimate_capacity(train_mw.to_numpy())
    train_x = to_bounded(train_mw.to_numpy(), cap, cfg.eps).values
    test_x = to_bounded(test_mw.to_numpy(), cap, cfg.eps).values
    p = cfg.p or select_order(glogit_forward(train_x, 1.0), cfg.p_min, cfg.p_max)
    return train_x, test_x, cap, _isoformat(test_mw.index), p


def _common(streams: dict) -> dict:
    """Restrict every stream to the times emitted by all methods."""
    common = None
    for s in streams.values():
        common = set(s.time) if common is None else common & set(s.time)
    return {m: s.subset(np.isin(s.time, sorted(common))) for m, s in streams.items()}


def run_farm(cfg: RunConfig, farm: dict) -> dict:
    """Train, stream and score every scenario of one farm."""
    out = {"farm": farm["id"], "scenarios": [], "error": None}
    try:
        series = load_farm(cfg.data_dir, farm)
        out["filter"] = _filter_farm(cfg, series)
        hp = cfg.hyperparams()
        for ty, sy in _farm_scenarios(cfg, series):
            train_x, test_x, cap, times, p = prepare_scenario(cfg, series, ty, sy)
            tm = train_models(train_x, p, hp, cfg.methods)
            streams = _common({m: run_stream(f, test_x, times) for m, f in tm.forecasters.items()})
            n = len(next(iter(streams.values())))
            if n == 0:
                raise InsufficientDataError(f"no forecasts could be scored for {ty}->{sy}")
            crps = {m: float(crps_values(s).mean()) * 100 for m, s in streams.items()}
            curves = {}
            for m, s in streams.items():
                try:
                    curves[m] = reliability_curve(s, seed=cfg.seed).tolist()
                except InsufficientDataError:
                    pass
            if cfg.write_forecasts:
                fdir = Path(cfg.out_dir) / "forecasts" / farm["id"]
                fdir.mkdir(parents=True, exist_ok=True)
                for m, s in streams.items():
                    write_forecast_csv(fdir / f"{ty}-{sy}_{m}.csv", s)
            out["scenarios"].append(
                {
                    "train": ty,
                    "test": sy,
                    "p": int(p),
                    "capacity_mw": cap,
                    "nu_lnu": tm.nu_lnu,
                    "final_nu": {m: f.nu for m, f in tm.forecasters.items() if m in ADAPTIVE},
                    "n_eval": n,
                    "crps": crps,
                    "curves": curves,
                }
            )
    except Exception as exc:  # isolate the farm, keep the run going
        log.warning("farm %s failed: %s", farm["id"], exc)
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def _map_farms(cfg: RunConfig, func, farms):
    if cfg.workers > 1 and len(farms) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(func, [cfg] * len(farms), farms))
    else:
        results = [func(cfg, f) for f in farms]
    return sorted(results, key=lambda r: r["farm"])


# -- reports ------------------------------------------------------------------


def _versions() -> dict:
    import pandas
    import scipy

    return {"boundcast": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "pandas": pandas.__version__}


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(_rounded(payload), indent=1, sort_keys=True) + "\n")


def _rounded(obj):
    if isinstance(obj, float):
        return float(f"{obj:.10g}")
    if isinstance(obj, dict):
        return {str(k): _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    if isinstance(obj, np.generic):
        return _rounded(obj.item())
    return obj


def _crps_table(path, results, methods, keep_only: bool) -> None:
    rows_by_scen = {}
    for r in results:
        if keep_only and not r.get("filter", {}).get("keep", True):
            continue
        for s in r["scenarios"]:
            rows_by_scen.setdefault(f"{s['train']}-{s['test']}", []).append(s["crps"])
    labels = sorted(rows_by_scen)
    rows = []
    for m in methods:
        per = [float(np.mean([c[m] for c in rows_by_scen[lb]])) for lb in labels]
        everything = [c[m] for lb in labels for c in rows_by_scen[lb]]
        rows.append([m] + per + [float(np.mean(everything)) if everything else float("nan")])
    write_table_csv(path, ["method"] + labels + ["average"], rows)


def write_reports(cfg: RunConfig, results: list[dict]) -> dict:
    out = Path(cfg.out_dir)
    (out / "reliability").mkdir(parents=True, exist_ok=True)
    methods = list(cfg.methods)
    kept = [r for r in results if r.get("filter", {}).get("keep", True)]
    _crps_table(out / "crps_table.csv", results, methods, keep_only=True)
    _crps_table(out / "crps_table_all.csv", results, methods, keep_only=False)

    counts = rank_table([s["crps"] for r in kept for s in r["scenarios"]], methods)
    write_table_csv(
        out / "rank_table.csv", ["method"] + [f"rank_{i + 1}" for i in range(len(methods))], [[m] + counts[i].tolist() for i, m in enumerate(methods)]
    )

    rows = []
    for r in results:
        keep = int(r.get("filter", {}).get("keep", True))
        for s in r["scenarios"]:
            base = s["crps"].get("Persistence")
            for m in methods:
                sk = skill(s["crps"][m], base) * 100 if base else float("nan")
                rows.append([r["farm"], s["train"], s["test"], m, s["crps"][m], sk, keep])
    write_table_csv(out / "skill_by_farm.csv", ["farm", "train_year", "test_year", "method", "crps_pct", "skill_pct", "kept"], rows)

    envelope = {}
    for r in results:
        curves = {f"{s['train']}-{s['test']}": s["curves"] for s in r["scenarios"]}
        if curves:
            _write_json(out / "reliability" / f"{r['farm']}.json", {"levels": LEVELS.tolist(), "scenarios": curves})
    for m in methods:
        cs = [s["curves"][m] for r in kept for s in r["scenarios"] if m in s["curves"]]
        if len(cs) >= 5:
            env = functional_envelope(cs)
            envelope[m] = {k: getattr(env, k).tolist() for k in ("median", "central_lo", "central_hi", "outer_lo", "outer_hi", "outliers")}
    if envelope:
        _write_json(out / "reliability" / "envelope.json", {"levels": LEVELS.tolist(), "methods": envelope})

    manifest = {
        "config": cfg.to_dict(),
        "overrides": cfg.overrides(),
        "versions": _versions(),
        "farms": [
            {
                "id": r["farm"],
                "filter": r.get("filter"),
                "error": r["error"],
                "scenarios": [{k: v for k, v in s.items() if k != "curves"} for s in r["scenarios"]],
            }
            for r in results
        ],
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def run_experiment(cfg: RunConfig) -> dict:
    """Full pipeline; raises :class:`InsufficientDataError` if nothing was scored."""
    farms = _selected_farms(cfg)
    results = _map_farms(cfg, run_farm, farms)
    if not any(r["scenarios"] for r in results):
        errors = "; ".join(f"{r['farm']}: {r['error']}" for r in results if r["error"])
        raise InsufficientDataError("no farm-scenario could be evaluated" + (f" ({errors})" if errors else ""))
    return write_reports(cfg, results)


# -- sensitivity ---------------------------------------------------------------


def _jitter(rng, magnitude, shape=()):
    return 1.0 + magnitude * rng.standard_normal(shape)


def _jitter_spd(M, rng, magnitude):
    """Perturb an SPD matrix through its Cholesky factor (stays PSD)."""
    L = np.linalg.cholesky(M)
    Lp = np.tril(L * _jitter(rng, magnitude, L.shape))
    return Lp @ Lp.T


def perturb_forecaster(forecaster, target: str, rng, magnitude: float):
    """Copy of ``forecaster`` with one parameter group multiplicatively disturbed."""
    f = copy.deepcopy(forecaster)
    if target not in SENSITIVITY_TARGETS:
        raise ParameterError(f"unknown target {target!r}")
    if isinstance(f, BayesForecaster):
        st = f.state
        lo, hi = f.nu_config.nu_bounds
        if target == "mu":
            st = replace(st, mu_theta=st.mu_theta * _jitter(rng, magnitude, st.mu_theta.shape))
        elif target == "sigma2":
            st = replace(st, beta=st.beta * abs(_jitter(rng, magnitude)))
        elif target == "P":
            st = replace(st, P_theta=_jitter_spd(st.P_theta, rng, magnitude))
        else:
            st = replace(st, nu=float(np.clip(st.nu * _jitter(rng, magnitude), lo, hi)))
        f.state = st
    elif isinstance(f, NrForecaster):
        w = f.state.w.copy()
        if target == "mu":
            w[:-2] *= _jitter(rng, magnitude, w[:-2].shape)
        elif target == "sigma2":
            w[-2] *= abs(_jitter(rng, magnitude))
        elif target == "nu":
            w[-1] = np.clip(w[-1] * _jitter(rng, magnitude), 0.1, 3.0)
        else:
            f.state = replace(f.state, hess=-_jitter_spd(-f.state.hess, rng, magnitude))
        if target != "P":
            f.state = replace(f.state, w=w)
    elif isinstance(f, RlsForecaster):
        st = f.state
        if target == "mu":
            st = replace(st, theta=st.theta * _jitter(rng, magnitude, st.theta.shape))
        elif target == "sigma2":
            st = replace(st, sigma2=st.sigma2 * abs(_jitter(rng, magnitude)))
        elif target == "P":
            st = replace(st, P=_jitter_spd(st.P, rng, magnitude))
        else:
            f.map = GlogitMap(float(np.clip(f.map.nu * _jitter(rng, magnitude), 0.1, 3.0)), f.map.eps)
        f.state = st
    else:
        raise ParameterError(f"{f.method} has no state to disturb")
    return f


def _skill_pct(stream, pers_crps: dict) -> float:
    vals = crps_values(stream)
    base = np.mean([pers_crps[t] for t in stream.time])
    return skill(vals.mean(), base) * 100


def sensitivity_draws(tm: TrainedModels, test_x, method: str, target: str, n_draws: int, magnitude: float, seed: int):
    """Skill (percent) of ``n_draws`` disturbed copies plus the undisturbed baseline."""
    pers = run_stream(copy.deepcopy(tm.forecasters["Persistence"]), test_x)
    pers_crps = dict(zip(pers.time.tolist(), crps_values(pers)))
    baseline = _skill_pct(run_stream(copy.deepcopy(tm.forecasters[method]), test_x), pers_crps)
    key = (METHODS.index(method), SENSITIVITY_TARGETS.index(target))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))
    draws = np.empty(n_draws)
    for i in range(n_draws):
        f = perturb_forecaster(tm.forecasters[method], target, rng, magnitude)
        draws[i] = _skill_pct(run_stream(f, test_x), pers_crps)
    return baseline, draws


def run_sensitivity(cfg: RunConfig, farm_id: str | None = None) -> dict:
    """Disturbance study on one farm-scenario; writes ``sensitivity/<method>_<target>.csv``."""
    farms = _selected_farms(cfg)
    if farm_id is not None:
        farms = [f for f in farms if f["id"] == farm_id]
    if not farms:
        raise ParameterError("no farm selected for the sensitivity study")
    farm = farms[0]
    series = load_farm(cfg.data_dir, farm)
    scen = _farm_scenarios(cfg, series)
    if not scen:
        raise InsufficientDataError(f"farm {farm['id']} has no train/test scenario")
    ty, sy = scen[0]
    train_x, test_x, _, _, p = prepare_scenario(cfg, series, ty, sy)
    methods = tuple(dict.fromkeys(("Persistence",) + tuple(cfg.sensitivity_methods)))
    tm = train_models(train_x, p, cfg.hyperparams(), methods)
    out_dir = Path(cfg.out_dir) / "sensitivity"
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for m in cfg.sensitivity_methods:
        for t in cfg.sensitivity_targets:
            base, draws = sensitivity_draws(tm, test_x, m, t, cfg.n_draws, cfg.magnitude, cfg.seed)
            rows = [["baseline", base]] + [[i, d] for i, d in enumerate(draws)]
            write_table_csv(out_dir / f"{m}_{t}.csv", ["draw", "skill_pct"], rows)
            summary[f"{m}_{t}"] = {"baseline": base, "mean": float(draws.mean()), "std": float(draws.std(ddof=1)) if draws.size > 1 else 0.0}
    _write_json(
        out_dir / "manifest.json",
        {"config": cfg.to_dict(), "farm": farm["id"], "scenario": [ty, sy], "p": int(p), "versions": _versions(), "summary": summary},
    )
    return summary


# -- pipeline stages used by the command line ------------------------------------


def ingest_corpus(cfg: RunConfig) -> list[dict]:
    """Corrected, capacity-normalised series per farm and year under ``out_dir/ingest``."""
    out = Path(cfg.out_dir) / "ingest"
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for farm in _selected_farms(cfg):
        series = load_farm(cfg.data_dir, farm)
        for year in available_years(series):
            mw = year_slice(series, year)
            cap = estimate_capacity(mw.to_numpy())
            x = to_bounded(mw.to_numpy(), cap, cfg.eps).values
            with open(out / f"{farm['id']}_{year}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["timestamp", "x"])
                w.writerows([t, "" if np.isnan(v) else f"{v:.10g}"] for t, v in zip(_isoformat(mw.index), x))
            rows.append([farm["id"], year, cap, int(np.count_nonzero(~np.isnan(x))), int(np.count_nonzero(np.isnan(x)))])
    write_table_csv(out / "capacity.csv", ["farm", "year", "capacity_mw", "n_valid", "n_missing"], rows)
    return [dict(zip(["farm", "year", "capacity_mw", "n_valid", "n_missing"], r)) for r in rows]


def filter_corpus(cfg: RunConfig) -> list[dict]:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for farm in _selected_farms(cfg):
        res = _filter_farm(replace(cfg, filter_outliers=True), load_farm(cfg.data_dir, farm))
        rows.append([farm["id"], int(res["keep"]), int(res["checked"]), res.get("rolling_max_var", float("nan")), res.get("quantile_width", float("nan"))])
    write_table_csv(out / "farm_filter.csv", ["farm", "keep", "checked", "rolling_max_var", "quantile_width"], rows)
    return [dict(zip(["farm", "keep", "checked", "rolling_max_var", "quantile_width"], r)) for r in rows]


def _describe(tm: TrainedModels) -> dict:
    d = {"p": tm.p, "nu_lnu": tm.nu_lnu, "theta_lnu": tm.ar_lnu.theta.tolist(), "sigma2_lnu": tm.ar_lnu.sigma2, "persistence_sigma2": tm.persistence_sigma2}
    for m, f in tm.forecasters.items():
        st = getattr(f, "state", None)
        if isinstance(f, BayesForecaster):
            d[m] = {"mu": st.mu_theta.tolist(), "P": st.P_theta.tolist(), "alpha": st.alpha, "beta": st.beta, "nu": st.nu}
        elif isinstance(f, NrForecaster):
            d[m] = {"w": st.w.tolist(), "n_skipped": st.n_skipped}
        elif isinstance(f, RlsForecaster):
            d[m] = {"theta": st.theta.tolist(), "sigma2": st.sigma2, "nu": f.nu}
        elif st is not None:
            d[m] = {"theta": st.theta.tolist(), "sigma2": st.sigma2, "nu": f.nu}
    return d


def train_corpus(cfg: RunConfig) -> dict:
    """Fit every method on each training year; writes ``trained.json``."""
    payload = {}
    for farm in _selected_farms(cfg):
        series = load_farm(cfg.data_dir, farm)
        for ty, sy in _farm_scenarios(cfg, series):
            train_x, _, cap, _, p = prepare_scenario(cfg, series, ty, sy)
            tm = train_models(train_x, p, cfg.hyperparams(), cfg.methods)
            payload[f"{farm['id']}/{ty}"] = {"capacity_mw": cap, **_describe(tm)}
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    _write_json(Path(cfg.out_dir) / "trained.json", payload)
    return payload


def evaluate_forecast_dir(forecast_dir, out_dir, eps: float = 0.005, seed: int = 0) -> list[list]:
    """Score previously written forecast CSVs (``<scenario>_<method>.csv``)."""
    from .forecast import read_forecast_csv

    rows = []
    for path in sorted(Path(forecast_dir).rglob("*.csv")):
        s = read_forecast_csv(path, eps)
        if len(s) == 0:
            continue
        rows.append([path.relative_to(forecast_dir).as_posix(), s.method, len(s), float(crps_values(s).mean()) * 100])
    if not rows:
        raise InsufficientDataError(f"no forecast files under {forecast_dir}")
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    write_table_csv(Path(out_dir) / "evaluation.csv", ["file", "method", "n", "crps_pct"], rows)
    return rows


__all__ = [
    "RunConfig",
    "run_experiment",
    "run_farm",
    "run_sensitivity",
    "sensitivity_draws",
    "perturb_forecaster",
    "ingest_corpus",
    "filter_corpus",
    "train_corpus",
    "evaluate_forecast_dir",
    "read_config_file",
    "config_from_pairs",
    "bayes_nu",
]
