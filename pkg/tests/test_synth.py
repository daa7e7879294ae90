import numpy as np
import pytest
from scipy import stats

from boundcast.armodel import pacf
from boundcast.errors import ParameterError
from boundcast.synth import SynthSpec, generate, is_stationary, nu_path, synth_corpus
from boundcast.datapipe import read_farm_csv, read_manifest


def test_deterministic():
    spec = SynthSpec(theta=(0.0, 0.8), sigma2=0.5, seed=3, length=500, missing_rate=0.05)
    a, b = generate(spec), generate(spec)
    np.testing.assert_array_equal(a.series.values, b.series.values)
    c = generate(SynthSpec(theta=(0.0, 0.8), sigma2=0.5, seed=4, length=500))
    assert not np.allclose(a.y, c.y)


def test_noiseless_unit_root_is_constant():
    r = generate(SynthSpec(theta=(0.0, 1.0), sigma2=0.0, seed=0, length=200))
    assert np.ptp(r.series.values) == 0.0


def test_pacf_of_ar2():
    r = generate(SynthSpec(theta=(0.0, 0.5, 0.3), sigma2=1.0, seed=7, length=10_000))
    ph = pacf(r.y, 6)
    band = 1.96 / np.sqrt(r.y.size)
    assert np.all(np.abs(ph[:2]) > band)
    assert np.sum(np.abs(ph[2:]) > band) <= 1


def test_skewness_changes_sign_along_ramp():
    # level 0.5 at nu = 1 is symmetric; the marginal skew flips as nu crosses 1
    spec = SynthSpec(theta=(0.0, 0.7), sigma2=0.5, seed=8, length=40_000, nu=0.5, nu_profile="ramp", nu_end=2.0)
    r = generate(spec)
    x = r.series.values
    early, late = x[: 8000], x[-8000:]
    assert np.sign(stats.skew(early)) != np.sign(stats.skew(late))


def test_transformed_noise_is_gaussian():
    r = generate(SynthSpec(theta=(0.1, 0.6), sigma2=0.7, seed=9, length=100_000, nu=1.4))
    resid = r.y[1:] - 0.1 - 0.6 * r.y[:-1]
    assert abs(stats.kurtosis(resid, fisher=False) - 3.0) < 0.2
    np.testing.assert_allclose(resid, r.noise[1:], atol=1e-10)


def test_ground_truth_log():
    spec = SynthSpec(theta=(0.0, 0.5), sigma2=0.3, seed=1, length=100, nu=1.0, nu_profile="step", nu_end=2.0, step_at=0.25)
    r = generate(spec)
    np.testing.assert_array_equal(r.nu_path, nu_path(spec))
    assert r.nu_path[24] == 1.0 and r.nu_path[25] == 2.0
    np.testing.assert_allclose(r.series.values, np.clip(np.exp(-np.logaddexp(0, -r.y) / r.nu_path), 0.005, 0.995))


def test_ramp_start_holds_then_moves():
    spec = SynthSpec(theta=(0.0, 0.5), sigma2=0.3, seed=1, length=100, nu=1.0, nu_profile="ramp", nu_end=1.6, ramp_start=0.5)
    path = nu_path(spec)
    assert np.all(path[:50] == 1.0) and path[-1] == pytest.approx(1.6)
    assert np.all(np.diff(path) >= 0)


def test_validation():
    assert is_stationary((0.0, 0.5, 0.3)) and not is_stationary((0.0, 1.2))
    with pytest.raises(ParameterError):
        generate(SynthSpec(theta=(0.0, 1.1), sigma2=1.0, seed=0))
    with pytest.raises(ParameterError):
        generate(SynthSpec(theta=(0.0, 0.5), sigma2=1.0, seed=None))
    with pytest.raises(ParameterError):
        generate(SynthSpec(theta=(0.0, 0.5), sigma2=1.0, seed=0, nu_profile="ramp"))


def test_corpus_round_trip(tmp_path):
    synth_corpus(tmp_path, n_farms=2, seed=5, periods=300, missing_rate=0.1)
    m = read_manifest(tmp_path)
    assert [f["id"] for f in m["farms"]] == ["farm000", "farm001"]
    df = read_farm_csv(tmp_path / "farm000.csv")
    assert len(df) == 300
    assert (df["bav_mwh"].fillna(0) == 0).all()
    assert df["power_mw"].max() <= 100.0
    again = tmp_path / "again"
    synth_corpus(again, n_farms=2, seed=5, periods=300, missing_rate=0.1)
    assert (again / "farm001.csv").read_bytes() == (tmp_path / "farm001.csv").read_bytes()
