import numpy as np
import pytest
from scipy.stats import norm

from conftest import small_dataset
from oracles import bivariate_instance, quadrature_loglik
from saemlogit.data import MaskedDataset, Theta
from saemlogit.exceptions import FisherInformationWarning, SingularHessianError
from saemlogit.inference import (FimAccumulators, FitResult, bic, fit_model, louis_fim, n_params,
                                 obs_loglik, wald_ci)
from saemlogit.logistic import complete_loglik, design, logistic_information
from saemlogit.saem import SaemConfig

FAST = SaemConfig(k1=20, n_iter=80, mh_steps=5, seed=1)


def test_loglik_of_complete_data_is_exact():
    d, x, beta, mu, sigma = small_dataset(n=100, rate=0.0)
    theta = Theta(beta=beta, mu=mu, sigma=sigma)
    assert obs_loglik(theta, d, S=10) == pytest.approx(complete_loglik(theta, design(x), d.y), rel=1e-12)


def test_loglik_matches_quadrature():
    d, theta = bivariate_instance()
    ref = quadrature_loglik(theta.beta, theta, d)
    est = obs_loglik(theta, d, S=20_000, rng=np.random.default_rng(0))
    assert est == pytest.approx(ref, rel=1e-3)


def test_loglik_methods_agree():
    d, x, beta, mu, sigma = small_dataset(n=200, rate=0.3, seed=3)
    theta = Theta(beta=beta, mu=mu, sigma=sigma)
    a, rows_a = obs_loglik(theta, d, S=500, rng=np.random.default_rng(1), per_row=True)
    b, rows_b = obs_loglik(theta, d, S=500, rng=np.random.default_rng(1), per_row=True, method="factorized")
    assert np.allclose(rows_a, rows_b, atol=1e-9)
    assert a == pytest.approx(rows_a.sum())
    with pytest.raises(ValueError):
        obs_loglik(theta, d, method="bridge")


def test_all_missing_row_uses_only_response_term():
    theta = Theta(beta=[0.2, 1.0], mu=[0.0], sigma=[[1.0]])
    d = MaskedDataset(y=[1, 0], x=[[np.nan], [0.5]], mask=[[True], [False]])
    _, rows = obs_loglik(theta, d, S=200_000, rng=np.random.default_rng(2), per_row=True)
    # P(y=1) = E[sigmoid(0.2 + X)], X ~ N(0, 1), by quadrature
    t, w = np.polynomial.hermite_e.hermegauss(60)
    ref = np.log(np.sum(w / w.sum() / (1 + np.exp(-(0.2 + t)))))
    assert rows[0] == pytest.approx(ref, abs=2e-3)


def test_louis_on_complete_data_is_analytic_information():
    d, x, beta, mu, sigma = small_dataset(n=200, rate=0.0, seed=5)
    theta = Theta(beta=beta, mu=mu, sigma=sigma)
    fim = louis_fim(theta, d, S=10)
    ref = logistic_information(beta, design(x))
    assert np.allclose(fim, ref, rtol=1e-10)


def test_louis_accumulators_match_direct_moments():
    rng = np.random.default_rng(0)
    grads = rng.standard_normal((3, 40, 2))
    hess = -np.abs(rng.standard_normal((3, 40, 2, 2)))
    hess = hess + np.swapaxes(hess, -1, -2)
    acc = FimAccumulators(3, 2)
    for s in range(40):
        acc.update(grads[:, s], hess[:, s])
    acc_b = FimAccumulators(3, 2)
    acc_b.update_batch(grads[:, :25], hess[:, :25])
    acc_b.update_batch(grads[:, 25:], hess[:, 25:])
    # -E[H] - E[g g^T] + E[g] E[g]^T per row, summed over rows
    mg = grads.mean(axis=1)
    ref = (-hess.mean(axis=1) - np.einsum("rsa,rsb->rab", grads, grads) / 40
           + np.einsum("ra,rb->rab", mg, mg)).sum(axis=0)
    assert np.allclose(acc.information(), ref)
    assert np.allclose(acc_b.information(), ref)


def test_louis_is_smaller_than_complete_information():
    d, x, beta, mu, sigma = small_dataset(n=300, rate=0.3, seed=6)
    theta = Theta(beta=beta, mu=mu, sigma=sigma)
    fim = louis_fim(theta, d, S=300, rng=np.random.default_rng(0))
    full = logistic_information(beta, design(x))
    assert np.allclose(fim, fim.T)
    np.linalg.cholesky(fim)
    # missing covariates can only lose information on average
    assert np.trace(fim) < np.trace(full) * 1.05


def test_wald_interval():
    fim = np.array([[4.0, 0.0], [0.0, 25.0]])
    se, lo, hi = wald_ci(fim, np.array([1.0, -1.0]), level=0.9)
    assert np.allclose(se, [0.5, 0.2])
    z = norm.ppf(0.95)
    assert np.allclose(lo, [1 - z * 0.5, -1 - z * 0.2])
    assert np.allclose(hi, [1 + z * 0.5, -1 + z * 0.2])
    with pytest.raises(SingularHessianError):
        wald_ci(np.ones((2, 2)), np.zeros(2))


def test_wald_interval_negative_variance_warns():
    fim = np.array([[1.0, 0.0], [0.0, -2.0]])
    with pytest.warns(FisherInformationWarning):
        se, lo, hi = wald_ci(fim, np.zeros(2))
    assert np.isnan(se[1]) and np.isfinite(se[0])


def test_bic_counts_parameters():
    assert n_params(5) == 1 + 5 + 5 + 15
    assert n_params(5, [0, 2]) == 1 + 2 + 5 + 15
    assert bic(-100.0, 1000, [0, 2], 5) == pytest.approx(200.0 + np.log(1000) * 23)


def test_fit_model_round_trip(tmp_path):
    d = small_dataset(seed=7)[0]
    res = fit_model(d, FAST, fim_samples=200, loglik_samples=200)
    assert np.all(res.ci_low < res.theta.beta) and np.all(res.theta.beta < res.ci_high)
    assert res.bic == pytest.approx(bic(res.loglik_obs, d.n, res.active, d.p))
    path = tmp_path / "fit.json"
    res.to_json(path)
    back = FitResult.from_json(path)
    assert np.array_equal(back.theta.beta, res.theta.beta)
    assert np.array_equal(back.se, res.se)
    assert back.columns == res.columns and back.active == res.active


def test_fit_model_restricted_has_nan_intervals():
    d = small_dataset(seed=8)[0]
    res = fit_model(d, FAST, active=[1], fim_samples=100, loglik_samples=100)
    assert np.isnan(res.se[[1, 3]]).all() and np.isfinite(res.se[[0, 2]]).all()
    assert res.fim.shape == (2, 2)
    assert res.n_params == n_params(3, [1])
