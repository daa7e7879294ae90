import json

import numpy as np
import pytest
from scipy import stats

from boundcast.errors import DomainError, InsufficientDataError
from boundcast.evaluation import (
    binomial_band,
    crps_mean,
    crps_single,
    crps_values,
    functional_envelope,
    pit_values,
    rank_table,
    reliability_curve,
    skill,
    write_curves_json,
)
from boundcast.forecast import LEVELS, persistence_forecast
from boundcast.glogit import GlogitMap, InflatedNormal, PredictiveCdf

EPS = 0.005


def _gauss_crps(mu, sigma, y):
    z = (y - mu) / sigma
    return sigma * (z * (2 * stats.norm.cdf(z) - 1) + 2 * stats.norm.pdf(z) - 1 / np.sqrt(np.pi))


def _transformed(rng):
    m = GlogitMap(rng.uniform(0.3, 2.5), EPS)
    return PredictiveCdf(InflatedNormal(rng.normal(0, 1.5), rng.uniform(0.1, 1.5), m.lo, m.hi), m)


def test_point_mass_crps_is_absolute_error(rng):
    for _ in range(50):
        mu, y = rng.uniform(EPS, 1 - EPS, 2)
        f = PredictiveCdf(InflatedNormal(mu, 0.0, EPS, 1 - EPS))
        assert abs(crps_single(f, y) - abs(mu - y)) <= 1e-12


def test_interior_gaussian_closed_form(rng):
    for _ in range(20):
        mu, sigma = rng.uniform(0.3, 0.7), rng.uniform(0.005, 0.04)
        y = rng.uniform(0.2, 0.8)
        f = persistence_forecast(mu, sigma**2)
        assert crps_single(f, y) == pytest.approx(_gauss_crps(mu, sigma, y), abs=1e-6)


def test_energy_form_monte_carlo(rng):
    n = 200_000
    for _ in range(20):
        f = _transformed(rng)
        y = float(f.sample(rng))
        a, b = f.sample(rng, n), f.sample(rng, n)
        terms = np.abs(a - y) - 0.5 * np.abs(a - b)
        est, se = terms.mean(), terms.std(ddof=1) / np.sqrt(n)
        assert abs(crps_single(f, y) - est) <= 3 * se + 1e-12


def test_vectorised_matches_single(rng):
    fs = [_transformed(rng) for _ in range(30)]
    ys = [float(f.sample(rng)) for f in fs]
    v = crps_values(fs, ys)
    np.testing.assert_allclose(v, [crps_single(f, y) for f, y in zip(fs, ys)], rtol=1e-12)


def test_crps_nonnegative_and_observation_domain(rng):
    f = _transformed(rng)
    assert crps_single(f, 0.3) >= 0
    with pytest.raises(DomainError):
        crps_single(f, 0.999)


def test_crps_mean_skips_missing():
    f = persistence_forecast(0.5, 0.01)
    a = crps_mean([f, None, f], [0.4, 0.5, np.nan])
    assert a == pytest.approx(crps_single(f, 0.4))
    with pytest.raises(InsufficientDataError):
        crps_mean([None], [0.3])


def test_skill():
    assert skill(3.0, 4.0) == pytest.approx(0.25)
    assert skill(4.0, 4.0) == 0.0
    with pytest.raises(ZeroDivisionError):
        skill(1.0, 0.0)


def test_rank_table_with_ties():
    scen = [{"A": 1.0, "B": 2.0, "C": 3.0}, {"A": 2.0, "B": 2.0, "C": 1.0}]
    t = rank_table(scen, methods=("A", "B", "C"))
    np.testing.assert_array_equal(t, [[1, 1, 0], [0, 1, 1], [1, 0, 1]])
    assert np.all(t.sum(axis=0) == 2) and np.all(t.sum(axis=1) == 2)


def test_reliability_of_calibrated_forecasts(rng):
    fs = [_transformed(rng) for _ in range(4000)]
    ys = [float(f.sample(rng)) for f in fs]
    curve = reliability_curve(fs, ys)
    lo, hi = binomial_band(LEVELS, len(fs))
    assert np.all((curve >= lo) & (curve <= hi))


def test_pit_uniform_with_boundary_mass(rng):
    m = GlogitMap(1.0, EPS)
    fs = [PredictiveCdf(InflatedNormal(rng.normal(-4, 1), 1.0, m.lo, m.hi), m) for _ in range(3000)]
    ys = [float(f.sample(rng)) for f in fs]
    assert np.mean(np.isclose(ys, EPS)) > 0.1
    assert stats.kstest(pit_values(fs, ys), "uniform").pvalue > 1e-3


def test_reliability_shapes_for_miscalibration(rng):
    m = GlogitMap(1.0, EPS)
    mus = rng.normal(0, 1, 3000)
    truth = [PredictiveCdf(InflatedNormal(mu, 0.5, m.lo, m.hi), m) for mu in mus]
    ys = [float(f.sample(rng)) for f in truth]
    narrow = [PredictiveCdf(InflatedNormal(mu, 0.25, m.lo, m.hi), m) for mu in mus]
    wide = [PredictiveCdf(InflatedNormal(mu, 1.0, m.lo, m.hi), m) for mu in mus]
    lv = np.array([0.1, 0.9])
    cn = reliability_curve(narrow, ys, levels=lv)
    cw = reliability_curve(wide, ys, levels=lv)
    # too narrow: extremes happen more often than stated
    assert cn[0] > 0.15 and cn[1] < 0.85
    assert cw[0] < 0.05 and cw[1] > 0.95


def test_reliability_needs_pairs():
    f = persistence_forecast(0.5, 0.01)
    with pytest.raises(InsufficientDataError):
        reliability_curve([f] * 10, [0.5] * 10)


def test_functional_envelope(rng):
    base = np.linspace(0, 1, 21)
    curves = base + rng.normal(0, 0.01, (30, 21))
    curves[3] += 0.5
    env = functional_envelope(curves)
    assert list(env.outliers) == [3]
    assert np.all(env.outer_hi < 1.2)
    assert np.all(env.central_lo <= env.median) and np.all(env.median <= env.central_hi)
    with pytest.raises(InsufficientDataError):
        functional_envelope(curves[:3])


def test_curves_json(tmp_path):
    path = tmp_path / "c.json"
    write_curves_json(path, {"a": [0.1, 0.2]}, levels=[0.25, 0.75])
    d = json.loads(path.read_text())
    assert d["curves"]["a"] == [0.1, 0.2] and d["levels"] == [0.25, 0.75]
