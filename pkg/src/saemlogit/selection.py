"""BIC model selection and prediction for rows with missing covariates."""

from __future__ import annotations

import itertools
import logging
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import mean_impute
from .gaussian import MissingLayout, condition, sample
from .inference import fit_model
from .logistic import design, predict_prob
from .saem import SaemConfig

logger = logging.getLogger(__name__)

SELECTION_ITERATIONS = 200
MAX_EXHAUSTIVE_P = 15


@dataclass(frozen=True)
class ModelSpec:
    """Covariates (0-based) whose coefficients are free; the intercept always is."""

    active: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "active", tuple(sorted(set(int(j) for j in self.active))))

    def names(self, columns):
        return tuple(columns[j] for j in self.active)

    def with_added(self, j):
        return ModelSpec(self.active + (j,))


@dataclass(frozen=True)
class PredictionResult:
    prob: float
    label: int
    s_used: int


def candidate_seed(seed, columns, model):
    """Seed of a candidate fit, keyed on the names of its active covariates."""
    key = "\x1f".join(sorted(columns[j] for j in model.active)).encode()
    return int(np.random.SeedSequence([seed, zlib.crc32(key)]).generate_state(1)[0])


def constrained_saem(d, cfg=None, model=None, **fit_kw):
    """SAEM fit with coefficients outside ``model`` held at zero.

    mu and Sigma are always estimated on all covariates, so likelihoods of
    different models on the same data are comparable.
    """
    cfg = cfg or SaemConfig()
    active = tuple(range(d.p)) if model is None else model.active
    if any(j < 0 or j >= d.p for j in active):
        raise ValueError(f"model references covariates outside 0..{d.p - 1}")
    return fit_model(d, cfg, active=active, **fit_kw)


def _selection_config(cfg, n_iter):
    n_iter = min(n_iter, cfg.n_iter)
    return cfg.replace(n_iter=n_iter, k1=min(cfg.k1, n_iter - 1))


def _fit_candidate(d, cfg, model, S_loglik):
    cand_cfg = cfg.replace(seed=candidate_seed(cfg.seed, d.columns, model))
    try:
        return constrained_saem(d, cand_cfg, model, loglik_samples=S_loglik, with_fim=False)
    except (ArithmeticError, ValueError) as exc:
        logger.warning("candidate %s skipped: %s", model.names(d.columns), exc)
        return None


def _refit(d, cfg, model, S_loglik):
    return constrained_saem(d, cfg.replace(seed=candidate_seed(cfg.seed, d.columns, model)), model,
                            loglik_samples=S_loglik)


def forward_select(d, cfg=None, S_loglik=1000, selection_iter=SELECTION_ITERATIONS, refit=True):
    """Forward BIC selection starting from the intercept-only model.

    Each round fits every one-covariate extension of the incumbent (with a
    reduced SAEM budget) and keeps the best one if it lowers BIC.

    Returns
    -------
    model : ModelSpec
    fits : list of FitResult
        Every candidate fit in evaluation order; with ``refit`` the winner
        refitted at the full budget (with standard errors) comes last.
    """
    cfg = cfg or SaemConfig()
    sel_cfg = _selection_config(cfg, selection_iter)
    fits = []
    current = ModelSpec()
    best = _fit_candidate(d, sel_cfg, current, S_loglik)
    if best is None:
        raise RuntimeError("intercept-only model could not be fitted")
    fits.append(best)
    while len(current.active) < d.p:
        round_best, round_model = None, None
        for j in range(d.p):
            if j in current.active:
                continue
            model = current.with_added(j)
            res = _fit_candidate(d, sel_cfg, model, S_loglik)
            if res is None:
                continue
            fits.append(res)
            if round_best is None or res.bic < round_best.bic:
                round_best, round_model = res, model
        if round_best is None or round_best.bic >= best.bic:
            break
        best, current = round_best, round_model
        logger.info("added %s, BIC %.3f", d.columns[current.active[-1]], best.bic)
    if refit:
        fits.append(_refit(d, cfg, current, S_loglik))
    return current, fits


def exhaustive_select(d, cfg=None, S_loglik=1000, selection_iter=SELECTION_ITERATIONS, refit=True):
    """Fit all ``2**p`` covariate subsets and keep the lowest BIC.

    Same return convention as :func:`forward_select`.
    """
    if d.p > MAX_EXHAUSTIVE_P:
        raise ValueError(f"exhaustive search is limited to p <= {MAX_EXHAUSTIVE_P}")
    cfg = cfg or SaemConfig()
    sel_cfg = _selection_config(cfg, selection_iter)
    fits, best, best_model = [], None, None
    for k in range(d.p + 1):
        for subset in itertools.combinations(range(d.p), k):
            model = ModelSpec(subset)
            res = _fit_candidate(d, sel_cfg, model, S_loglik)
            if res is None:
                continue
            fits.append(res)
            if best is None or res.bic < best.bic:
                best, best_model = res, model
    if best is None:
        raise RuntimeError("no candidate model could be fitted")
    if refit:
        fits.append(_refit(d, cfg, best_model, S_loglik))
    return best_model, fits


def predict_incomplete(theta, rv, S=1000, threshold=0.5, rng=None):
    """Probability of ``y = 1`` with the missing covariates integrated out.

    Averages ``sigmoid(beta . z)`` over ``S`` draws of the missing block from
    its Gaussian law given the observed covariates. A complete row is scored
    exactly and ``S`` is ignored. Label is 1 iff ``prob >= threshold``.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    beta = theta.beta
    if rv.mis_idx.size == 0:
        z = np.concatenate([[1.0], rv.x_obs])
        prob = float(predict_prob(beta, z))
        return PredictionResult(prob=prob, label=int(prob >= threshold), s_used=0)
    if S < 1:
        raise ValueError("S must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    draws = sample(condition(theta, rv), rng, size=S)
    eta = beta[0] + beta[1:][rv.obs_idx] @ rv.x_obs + draws @ beta[1:][rv.mis_idx]
    prob = float(expit(eta).mean())
    return PredictionResult(prob=prob, label=int(prob >= threshold), s_used=S)


def predict_proba(theta, x, mask, S=1000, rng=None):
    """Marginalized probabilities for every row of ``x`` (vectorized)."""
    x = np.asarray(x, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    rng = np.random.default_rng() if rng is None else rng
    beta = theta.beta
    xz = np.where(mask, 0.0, x)
    prob = expit(beta[0] + xz @ beta[1:])
    layout = MissingLayout(mask)
    if layout.n_rows:
        q, lq = layout.precision_factors(theta.sigma)
        means = layout.means(theta.mu, q, lq, xz)
        dev = layout.deviations(lq, rng.standard_normal((layout.n_rows, layout.m_max, S)))
        b_mis = np.where(layout.valid, beta[1:][layout.mis_pad], 0.0)
        base = beta[0] + xz[layout.rows] @ beta[1:] + (means * b_mis).sum(axis=1)
        eta = base[:, None] + np.matmul(b_mis[:, None, :], dev)[:, 0, :]
        prob[layout.rows] = expit(eta).mean(axis=1)
    return prob


def predict_proba_imputed(beta, x, mask, means):
    """Probabilities after filling missing cells with ``means`` (imputation baseline)."""
    return predict_prob(beta, design(mean_impute(x, mask, means)))


def labels(prob, threshold=0.5):
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return (np.asarray(prob) >= threshold).astype(int)
