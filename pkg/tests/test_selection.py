import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import expit

from conftest import small_dataset
from saemlogit.data import Theta, make_row_view
from saemlogit.gaussian import condition
from saemlogit.saem import SaemConfig
from saemlogit.selection import (ModelSpec, candidate_seed, exhaustive_select, forward_select, labels,
                                 predict_incomplete, predict_proba, predict_proba_imputed)

THETA = Theta(beta=[0.3, 1.0, -0.8, 0.5], mu=[0.0, 1.0, -1.0],
              sigma=[[1.0, 0.5, 0.2], [0.5, 2.0, 0.3], [0.2, 0.3, 1.0]])


def test_complete_row_is_exact():
    x = np.array([0.2, 0.4, -1.0])
    res = predict_incomplete(THETA, make_row_view(x, np.zeros(3, bool)), S=10)
    assert res.s_used == 0
    assert res.prob == expit(0.3 + THETA.beta[1:] @ x)


def test_single_missing_coordinate_matches_quadrature():
    x = np.array([0.2, np.nan, -1.0])
    rv = make_row_view(x, np.array([False, True, False]))
    cg = condition(THETA, rv)
    t, w = hermegauss(60)
    x2 = cg.mu_c[0] + np.sqrt(cg.sigma_c[0, 0]) * t
    ref = np.sum(w * expit(0.3 + 1.0 * 0.2 - 0.8 * x2 + 0.5 * -1.0)) / w.sum()
    res = predict_incomplete(THETA, rv, S=200_000, rng=np.random.default_rng(0))
    assert res.prob == pytest.approx(ref, abs=2e-3)
    batch = predict_proba(THETA, x[None, :], np.isnan(x)[None, :], S=200_000, rng=np.random.default_rng(1))
    assert batch[0] == pytest.approx(ref, abs=2e-3)


def test_threshold_ties_go_to_one():
    assert list(labels(np.array([0.49, 0.5, 0.51]), 0.5)) == [0, 1, 1]
    with pytest.raises(ValueError):
        labels(np.array([0.5]), 1.0)
    with pytest.raises(ValueError):
        predict_incomplete(THETA, make_row_view(np.zeros(3), np.zeros(3, bool)), threshold=0.0)


def test_marginalized_differs_from_plug_in():
    # sigmoid is non-linear, so averaging over the missing value is not plugging in its mean
    x = np.array([[2.0, np.nan, np.nan]])
    mask = np.isnan(x)
    marg = predict_proba(THETA, x, mask, S=50_000, rng=np.random.default_rng(2))[0]
    cg = condition(THETA, make_row_view(x[0], mask[0]))
    plug = predict_proba_imputed(THETA.beta, x, mask, np.r_[0.0, cg.mu_c])[0]
    assert 0.0 < marg < 1.0 and abs(marg - plug) > 1e-3
    assert abs(marg - 0.5) < abs(plug - 0.5)


def test_model_spec_and_seeds():
    m = ModelSpec((2, 0, 2))
    assert m.active == (0, 2) and m.with_added(1).active == (0, 1, 2)
    cols = ("a", "b", "c")
    assert m.names(cols) == ("a", "c")
    assert candidate_seed(1, cols, m) == candidate_seed(1, ("c", "b", "a"), ModelSpec((0, 2)))
    assert candidate_seed(1, cols, m) != candidate_seed(2, cols, m)


@pytest.fixture(scope="module")
def sparse_data():
    # covariate 1 (0-based) carries no signal
    return small_dataset(n=600, p=3, rate=0.1, seed=11, beta=[0.2, 1.2, 0.0, -1.0])[0]


def test_forward_selection_drops_null_covariate(sparse_data):
    cfg = SaemConfig(k1=20, n_iter=100, mh_steps=5, seed=2)
    model, fits = forward_select(sparse_data, cfg, S_loglik=300, selection_iter=60)
    assert model.active == (0, 2)
    assert fits[-1].active == (0, 2) and np.isfinite(fits[-1].se[[0, 1, 3]]).all()
    assert fits[0].active == ()


def test_exhaustive_agrees_with_forward(sparse_data):
    cfg = SaemConfig(k1=20, n_iter=100, mh_steps=5, seed=2)
    model, fits = exhaustive_select(sparse_data, cfg, S_loglik=300, selection_iter=60, refit=False)
    assert model.active == (0, 2)
    assert len(fits) == 8
    assert min(fits, key=lambda f: f.bic).active == (0, 2)
