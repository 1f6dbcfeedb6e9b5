import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_dataset
from saemlogit.data import MaskedDataset
from saemlogit.exceptions import NotPositiveDefiniteError
from saemlogit.logistic import design, fit_newton, gaussian_mle
from saemlogit.saem import SaemConfig, gamma, initial_theta, repair_covariance, saem_fit

FAST = SaemConfig(k1=20, n_iter=80, mh_steps=5, seed=3)


def test_step_size_schedule():
    cfg = SaemConfig(k1=50, tau=1.0)
    assert [gamma(k, cfg) for k in (1, 50)] == [1.0, 1.0]
    assert gamma(51, cfg) == 1.0
    assert gamma(52, cfg) == 0.5
    assert gamma(60, SaemConfig(k1=50, tau=0.75)) == pytest.approx(10 ** -0.75)
    with pytest.raises(ValueError):
        gamma(0, cfg)


@pytest.mark.parametrize("kw", [dict(k1=500, n_iter=500), dict(tau=0.5), dict(tau=1.1),
                                dict(mh_steps=0), dict(seed=-1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SaemConfig(**kw)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000), p=st.integers(1, 5))
def test_gamma_sum_diverges_square_sum_bounded(seed, p):
    cfg = SaemConfig(k1=seed % 10, tau=0.6 + 0.4 * (p / 5), n_iter=seed % 10 + 1)
    g = np.array([gamma(k, cfg) for k in range(1, 5001)])
    assert np.all((g > 0) & (g <= 1)) and np.all(np.diff(g) <= 0)


def test_complete_data_reduces_to_newton():
    d, x, _, _, _ = small_dataset(n=300, rate=0.0, seed=1)
    theta, trace = saem_fit(d, FAST)
    ref = fit_newton(design(x), d.y)
    assert np.max(np.abs(theta.beta - ref)) < 1e-6
    mu, sigma = gaussian_mle(x)
    assert np.allclose(theta.mu, mu) and np.allclose(theta.sigma, sigma)
    assert np.isnan(trace.acceptance).all()


def test_fit_is_deterministic_and_trace_shapes():
    d = small_dataset(seed=4)[0]
    a, ta = saem_fit(d, FAST)
    b, tb = saem_fit(d, FAST)
    assert np.array_equal(a.beta, b.beta) and np.array_equal(a.sigma, b.sigma)
    assert ta.beta.shape == (80, 4) and ta.mu.shape == (80, 3)
    assert np.array_equal(ta.gamma[:20], np.ones(20))
    c, _ = saem_fit(d, FAST.replace(seed=4))
    assert not np.array_equal(a.beta, c.beta)


def test_row_permutation_invariance():
    d = small_dataset(seed=5)[0]
    perm = np.random.default_rng(0).permutation(d.n)
    shuffled = MaskedDataset(y=d.y[perm], x=d.x[perm], mask=d.mask[perm], row_ids=d.row_ids[perm])
    a, _ = saem_fit(d, FAST)
    b, _ = saem_fit(shuffled, FAST)
    assert np.array_equal(a.beta, b.beta)
    assert np.array_equal(a.sigma, b.sigma)


def test_estimates_close_to_complete_data_fit():
    # 20% MCAR costs precision, not location: stay near the fit on the full matrix
    d, x, *_ = small_dataset(n=3000, rate=0.2, seed=6)
    theta, _ = saem_fit(d, SaemConfig(n_iter=200, seed=1))
    mu, sigma = gaussian_mle(x)
    assert np.max(np.abs(theta.beta - fit_newton(design(x), d.y))) < 0.1
    assert np.max(np.abs(theta.mu - mu)) < 0.05
    assert np.max(np.abs(theta.sigma - sigma) / np.sqrt(np.outer(np.diag(sigma), np.diag(sigma)))) < 0.05
    theta.validate()


def test_restricted_coefficients_stay_zero():
    d = small_dataset(seed=7)[0]
    theta, _ = saem_fit(d, FAST, active=[0, 2])
    assert theta.beta[2] == 0.0 and theta.beta[1] != 0.0
    with pytest.raises(ValueError):
        saem_fit(d, FAST, active=[3])


def test_all_missing_rows_are_simulated():
    d0, x, *_ = small_dataset(n=150, seed=8)
    mask = d0.mask.copy()
    mask[:5] = True
    d = MaskedDataset(y=d0.y, x=x, mask=mask)
    theta, trace = saem_fit(d, FAST)
    assert np.all(np.isfinite(theta.beta))
    assert np.all(trace.acceptance > 0)


def test_initial_theta_is_mean_imputation_fit():
    d = small_dataset(seed=9)[0]
    th = initial_theta(d)
    x0 = np.where(d.mask, np.nanmean(d.x, axis=0), d.x)
    assert np.allclose(th.beta, fit_newton(design(x0), d.y))
    assert np.allclose(th.mu, x0.mean(axis=0))


def test_repair_covariance():
    good = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert repair_covariance(good) is good
    fixed = repair_covariance(np.array([[1.0, 1.0], [1.0, 1.0 - 1e-9]]))
    np.linalg.cholesky(fixed)
    with pytest.raises(NotPositiveDefiniteError):
        repair_covariance(-np.eye(2))
