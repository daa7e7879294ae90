import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boundcast.armodel import build_lag_design, ols_fit
from boundcast.errors import ParameterError
from boundcast.rls import (
    RlsState,
    effective_from_forgetting,
    forgetting_from_effective,
    rls_init,
    rls_update,
    rls_variance_update,
    variance_weight,
)


def _stream_batches(rng, design, n0):
    """Split the columns after ``n0`` into random consecutive batches."""
    idx = np.arange(n0, design.n)
    cuts = np.sort(rng.choice(np.arange(1, idx.size), size=min(10, idx.size - 1), replace=False))
    return [design.subset(b) for b in np.split(idx, cuts)]


def test_rls_equals_ols_without_forgetting(rng):
    for _ in range(30):
        p = int(rng.integers(1, 7))
        d = build_lag_design(rng.standard_normal(500), p)
        n0 = 3 * (p + 1)
        state = rls_init(d.subset(np.arange(n0)), lam=1.0, guard=np.inf)
        for b in _stream_batches(rng, d, n0):
            state = rls_update(state, b)
        assert np.max(np.abs(state.theta - ols_fit(d).theta)) <= 1e-8
        np.testing.assert_allclose(state.P, d.predictors @ d.predictors.T, rtol=1e-10)


def test_batch_differs_from_single_steps_with_forgetting(rng):
    d = build_lag_design(rng.standard_normal(200), 2)
    s0 = rls_init(d.subset(np.arange(50)), lam=0.95, guard=np.inf)
    one = s0
    for j in range(50, 60):
        one = rls_update(one, d.subset([j]))
    batch = rls_update(s0, d.subset(np.arange(50, 60)))
    assert not np.allclose(one.P, batch.P)
    # the batch decays the prior information once by lam**M
    np.testing.assert_allclose(batch.P, s0.P * 0.95**10 + d.subset(np.arange(50, 60)).predictors @ d.subset(np.arange(50, 60)).predictors.T)


def test_information_form_step_matches_covariance_form(rng):
    d = build_lag_design(rng.standard_normal(100), 2)
    s0 = rls_init(d.subset(np.arange(40)), lam=0.98, guard=np.inf)
    new = d.subset(np.arange(40, 45))
    s1 = rls_update(s0, new)
    P_new = s0.P * 0.98**5 + new.predictors @ new.predictors.T
    ref = s0.theta + np.linalg.solve(P_new, new.predictors @ (new.targets - new.predictors.T @ s0.theta))
    np.testing.assert_allclose(s1.theta, ref, atol=1e-12)


def test_guard_freezes_theta_but_advances_P(rng):
    d = build_lag_design(rng.standard_normal(60), 1)
    s0 = rls_init(d.subset(np.arange(20)), lam=0.99, guard=1e-9)
    s1 = rls_update(s0, d.subset([30]))
    np.testing.assert_array_equal(s1.theta, s0.theta)
    assert not np.allclose(s1.P, s0.P)


def test_empty_batch_is_noop(rng):
    d = build_lag_design(rng.standard_normal(60), 1)
    s0 = rls_init(d, lam=0.99)
    assert rls_update(s0, d.subset([])) is s0


@given(st.floats(0.9, 0.99999), st.integers(1, 50), st.integers(0, 2**31 - 1))
def test_information_stays_positive_definite(lam, m, seed):
    rng = np.random.default_rng(seed)
    d = build_lag_design(rng.uniform(-3, 3, 120), 2)
    s = rls_init(d.subset(np.arange(20)), lam=lam)
    s = rls_update(s, d.subset(np.arange(20, 20 + m)))
    np.testing.assert_allclose(s.P, s.P.T)
    assert np.linalg.eigvalsh(s.P)[0] > 0


def test_variance_weight_examples():
    assert variance_weight(0.5, 0.9999) == pytest.approx(0.9999)
    assert variance_weight(0.005, 0.9999) == pytest.approx(1 - 1e-4 * 4 * 0.005 * 0.995)
    assert variance_weight(1.0, 0.9) == pytest.approx(1.0)


def test_variance_update_as_printed_and_swapped():
    s = RlsState(np.zeros(2), np.eye(2), 0.5, lam=0.99)
    w = float(variance_weight(0.5, 0.99))
    out = rls_variance_update(s, 0.5, 1.0, 0.0)
    assert out.sigma2 == pytest.approx((1 - w) * 0.5 + w * 1.0)
    sw = RlsState(np.zeros(2), np.eye(2), 0.5, lam=0.99, swap_variance_weights=True)
    out = rls_variance_update(sw, 0.5, 1.0, 0.0)
    assert out.sigma2 == pytest.approx(w * 0.5 + (1 - w) * 1.0)


@given(st.floats(1.5, 1e6))
def test_effective_sample_size_round_trip(n):
    assert effective_from_forgetting(forgetting_from_effective(n)) == pytest.approx(n, rel=1e-8)


def test_effective_sample_size_example():
    assert effective_from_forgetting(0.9999) == pytest.approx(19999.0)


def test_bad_forgetting_factor():
    with pytest.raises(ParameterError):
        RlsState(np.zeros(2), np.eye(2), 1.0, lam=1.5)
    with pytest.raises(ParameterError):
        RlsState(np.zeros(2), np.eye(2), 0.0)


def test_zero_innovation_leaves_theta(rng):
    d = build_lag_design(rng.standard_normal(50), 1)
    s = rls_init(d, lam=0.99)
    b = np.array([[1.0], [0.3]])
    from boundcast.armodel import LagDesign

    out = rls_update(s, LagDesign(np.array([b[:, 0] @ s.theta]), b))
    np.testing.assert_allclose(out.theta, s.theta, atol=1e-15)
    assert np.trace(out.P) > 0.99 * np.trace(s.P)


def test_high_leverage_column_trips_guard():
    from boundcast.armodel import LagDesign

    s = RlsState(np.zeros(2), np.eye(2), 1.0, lam=0.9999, guard=0.1)
    new = LagDesign(np.array([1.0]), np.array([[1.0], [1.0]]))
    # unguarded step would be P_new^-1 Y e = [1/3, 1/3] (L1 norm about 0.67)
    out = rls_update(s, new)
    np.testing.assert_array_equal(out.theta, s.theta)
    free = rls_update(RlsState(np.zeros(2), np.eye(2), 1.0, lam=0.9999, guard=np.inf), new)
    assert np.abs(free.theta).sum() > 0.5


def test_init_matches_ols_exactly(rng):
    d = build_lag_design(rng.standard_normal(100), 3)
    s = rls_init(d, lam=0.999)
    np.testing.assert_array_equal(s.theta, ols_fit(d).theta)
    assert s.sigma2 == ols_fit(d).sigma2
    with pytest.raises(ParameterError):
        rls_init(d, lam=1.2)


def test_variance_weight_degenerate_cases():
    assert variance_weight(0.0, 0.9) == 1.0
    assert variance_weight(1.0, 0.9) == 1.0
    np.testing.assert_array_equal(variance_weight(np.linspace(0, 1, 5), 1.0), 1.0)
    s = RlsState(np.zeros(2), np.eye(2), 0.5, lam=0.9)
    assert rls_variance_update(s, 0.0, 0.7, 0.2).sigma2 == pytest.approx(0.25)
