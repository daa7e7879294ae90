import numpy as np
import pytest

from boundcast.armodel import build_lag_design, ols_fit
from boundcast.bayes import (
    BayesState,
    bayes_decay,
    bayes_init,
    bayes_predictive,
    bayes_rls_coincidence_check,
    bayes_update,
    posterior_mean_direct,
    posterior_mean_woodbury,
)
from boundcast.errors import ParameterError
from boundcast.rls import RlsState, rls_update


def _spd(rng, n):
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


def test_woodbury_matches_direct(rng):
    for _ in range(100):
        n, M = int(rng.integers(2, 8)), int(rng.integers(1, 20))
        mu, P = rng.standard_normal(n), _spd(rng, n)
        Y, y = rng.standard_normal((n, M)), rng.standard_normal(M)
        P_Z = _spd(rng, M) / M
        a = posterior_mean_direct(mu, P, Y, y, P_Z)
        b = posterior_mean_woodbury(mu, P, Y, y, P_Z)
        assert np.max(np.abs(a - b)) <= 1e-9


def test_unit_noise_precision_coincides_with_rls(rng):
    for _ in range(100):
        p, M = int(rng.integers(1, 6)), int(rng.integers(1, 10))
        d = build_lag_design(rng.standard_normal(M + p), p)
        P = _spd(rng, p + 1)
        mu = rng.standard_normal(p + 1)
        state = BayesState(mu, P, 2.0, 2.0)
        assert bayes_rls_coincidence_check(state, d)
        rls = rls_update(RlsState(mu, P, 1.0, lam=1.0, guard=np.inf), d)
        post = bayes_update(state, d, P_Z=np.eye(d.n))
        np.testing.assert_allclose(post.mu_theta, rls.theta, atol=1e-8)
        np.testing.assert_allclose(post.P_theta, rls.P, atol=1e-8)


def test_flat_prior_recovers_ols(rng):
    d = build_lag_design(rng.standard_normal(400), 3)
    post = bayes_update(bayes_init(3, prior_scale=1e-12), d)
    np.testing.assert_allclose(post.mu_theta, ols_fit(d).theta, atol=1e-8)


def test_sequential_equals_batch_without_decay(rng):
    d = build_lag_design(rng.standard_normal(100), 2)
    s0 = bayes_init(2, lambda_theta=1.0, lambda_z=1.0)
    batch = bayes_update(s0, d, P_Z=np.eye(d.n))
    seq = s0
    for j in range(d.n):
        seq = bayes_update(seq, d.subset([j]), P_Z=np.eye(1))
    np.testing.assert_allclose(seq.mu_theta, batch.mu_theta, atol=1e-10)
    np.testing.assert_allclose(seq.P_theta, batch.P_theta, rtol=1e-10)
    assert seq.alpha == pytest.approx(batch.alpha)
    assert seq.beta == pytest.approx(batch.beta, rel=1e-9)


def test_gamma_update_counts_observations(rng):
    d = build_lag_design(rng.standard_normal(50), 1)
    s0 = bayes_init(1, alpha0=3.0, beta0=1.5)
    s1 = bayes_update(s0, d)
    assert s1.alpha == pytest.approx(3.0 + 0.5 * d.n)
    assert s1.beta > s0.beta


def test_decay_widens_and_keeps_variance():
    s = BayesState(np.zeros(2), 4.0 * np.eye(2), 10.0, 5.0, lambda_theta=0.9, lambda_z=0.8)
    d = bayes_decay(s, M=2)
    np.testing.assert_allclose(d.P_theta, 4.0 * 0.81 * np.eye(2))
    assert d.alpha == pytest.approx(8.0) and d.beta == pytest.approx(4.0)
    assert d.sigma2 == pytest.approx(s.sigma2)


def test_predictive_variance_includes_parameter_uncertainty():
    s = BayesState(np.array([0.0, 0.5]), 4.0 * np.eye(2), 10.0, 5.0)
    f = bayes_predictive(s, [2.0])
    assert f.base.sigma**2 == pytest.approx(0.5 + (1 + 4) / 4.0)
    assert f.base.mu == pytest.approx(1.0)


def test_init_validation():
    with pytest.raises(ParameterError):
        bayes_init(1, prior_scale=0.0)
    with pytest.raises(ParameterError):
        bayes_init(1, lambda_theta=1.2)
    with pytest.raises(ParameterError):
        BayesState(np.zeros(2), np.eye(2), 0.0, 1.0)


def test_scalar_and_matrix_noise_precision_agree(rng):
    d = build_lag_design(rng.standard_normal(80), 2)
    s = bayes_init(2, alpha0=5.0, beta0=2.0)
    a = bayes_update(s, d)
    b = bayes_update(s, d, P_Z=2.5 * np.eye(d.n))
    np.testing.assert_allclose(a.mu_theta, b.mu_theta, rtol=1e-12)
    np.testing.assert_allclose(a.P_theta, b.P_theta, rtol=1e-12)
    assert a.beta == pytest.approx(b.beta, rel=1e-12)
    with pytest.raises(ParameterError):
        bayes_update(s, d, P_Z=np.eye(3))


def test_default_prior():
    s = bayes_init(2)
    np.testing.assert_allclose(np.linalg.inv(s.P_theta), 1e4 * np.eye(3))
    assert s.sigma2 == pytest.approx(1 / 101)
    np.testing.assert_array_equal(s.mu_theta, 0.0)
    assert s.lambda_theta == s.lambda_z == 0.995


def test_decay_examples():
    s = bayes_init(1)
    np.testing.assert_allclose(bayes_decay(s, 2).P_theta, 0.990025 * s.P_theta)
    one = BayesState(s.mu_theta, s.P_theta, 3.0, 2.0, lambda_theta=1.0, lambda_z=1.0)
    d = bayes_decay(one, 5)
    np.testing.assert_array_equal(d.P_theta, one.P_theta)
    assert (d.alpha, d.beta) == (3.0, 2.0)


def test_coincidence_false_for_mismatched_information(rng):
    d = build_lag_design(rng.standard_normal(10), 1)
    s = BayesState(np.zeros(2), _spd(rng, 2), 2.0, 2.0)
    other = RlsState(np.zeros(2), 10 * s.P_theta, 1.0, lam=1.0, guard=np.inf)
    assert not bayes_rls_coincidence_check(s, d, other)
    assert bayes_rls_coincidence_check(s, d.subset([0]))


def test_posterior_contraction_without_decay(rng):
    d = build_lag_design(rng.standard_normal(300), 2)
    s = bayes_init(2, lambda_theta=1.0, lambda_z=1.0)
    tr = np.trace(np.linalg.inv(s.P_theta))
    for j in range(d.n):
        s = bayes_update(s, d.subset([j]))
        t = np.trace(np.linalg.inv(s.P_theta))
        assert t <= tr * (1 + 1e-12)
        tr = t
        assert s.beta > 0


def test_predictive_limits():
    s = BayesState(np.array([0.2, 0.5]), 1e14 * np.eye(2), 10.0, 5.0)
    f = bayes_predictive(s, [1.0])
    assert f.base.sigma**2 == pytest.approx(0.5, rel=1e-9)
    assert f.cdf(1 - 0.005) == 1.0
    t = bayes_predictive(s, [1.0], student_t=True)
    assert t.base.df == 20.0
