"""Stochastic-approximation EM for logistic regression with missing covariates.

Each iteration
  1. simulates the missing covariates of every incomplete row with a short
     independence Metropolis-Hastings chain targeting p(x_mis | x_obs, y),
     warm-started at the row's previous completion;
  2. smooths the Gaussian sufficient statistics, ``s <- s + gamma_k (S(x) - s)``,
     and the regression coefficients, ``beta <- beta + gamma_k (beta_hat(x) - beta)``
     where ``beta_hat`` is a Newton solve on the completed data;
  3. recovers mu and Sigma in closed form from the smoothed statistics.

The logistic part of the complete-data likelihood has no finite-dimensional
sufficient statistic, hence the coefficient-space averaging for beta. Both
updates keep the complete-data MLE as a fixed point.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Theta, mean_impute
from .exceptions import NotPositiveDefiniteError, SeparationWarning
from .gaussian import MissingLayout
from .logistic import (_newton, separated as _separated, bernoulli_loglik, design, fit_newton,
                       gaussian_from_stats, gaussian_mle, gaussian_stats)
from .mh import independence_mh

logger = logging.getLogger(__name__)

# Stream tag mixed into every SAEM seed so that fit, Fisher information and
# log-likelihood draws never share a stream for the same user seed.
_SAEM_STREAM = 0x5AE3


@dataclass(frozen=True)
class SaemConfig:
    """Iteration budget and step-size schedule of SAEM.

    ``gamma_k = 1`` for ``k <= k1`` then ``(k - k1) ** -tau``.
    """

    k1: int = 50
    tau: float = 1.0
    n_iter: int = 500
    mh_steps: int = 10
    seed: int = 0
    beta_tol: float = 1e-6
    newton_max_iter: int = 20
    newton_tol: float = 1e-8

    def __post_init__(self):
        if not 0 <= self.k1 < self.n_iter:
            raise ValueError(f"need 0 <= k1 < n_iter, got k1={self.k1}, n_iter={self.n_iter}")
        if not 0.5 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0.5, 1], got {self.tau}")
        if self.mh_steps < 1:
            raise ValueError("mh_steps must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    def replace(self, **kw):
        from dataclasses import replace
        return replace(self, **kw)


@dataclass
class SuffStats:
    """Smoothed ``sum_i x_i`` and ``sum_i x_i x_i^T``."""

    s1: np.ndarray
    s2: np.ndarray

    def update(self, s1, s2, gamma):
        if gamma == 1.0:
            self.s1, self.s2 = s1.copy(), s2.copy()
        else:
            self.s1 = self.s1 + gamma * (s1 - self.s1)
            self.s2 = self.s2 + gamma * (s2 - self.s2)


@dataclass
class SaemTrace:
    """Per-iteration record of a SAEM run."""

    beta: np.ndarray
    mu: np.ndarray
    gamma: np.ndarray
    acceptance: np.ndarray
    converged_at: int | None = None
    warnings: list = field(default_factory=list)

    def __len__(self):
        return self.beta.shape[0]


def gamma(k, cfg):
    """Step size of iteration ``k`` (1-based)."""
    if k < 1:
        raise ValueError("iterations are numbered from 1")
    if k <= cfg.k1:
        return 1.0
    return float((k - cfg.k1) ** (-cfg.tau))


def repair_covariance(sigma, floor=1e-8):
    """Return ``sigma`` if positive definite, else floor its eigenvalues at ``floor * max``."""
    try:
        np.linalg.cholesky(sigma)
        return sigma
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(sigma)
    top = w.max()
    if not np.isfinite(top) or top <= 0:
        raise NotPositiveDefiniteError("covariance estimate has no positive eigenvalue")
    w = np.maximum(w, floor * top)
    fixed = (v * w) @ v.T
    fixed = 0.5 * (fixed + fixed.T)
    try:
        np.linalg.cholesky(fixed)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("covariance estimate not positive definite after repair") from None
    logger.debug("covariance repaired, smallest eigenvalue floored to %.3g", floor * top)
    return fixed


def _active_columns(p, active):
    """Design-matrix columns (intercept included) carrying free coefficients."""
    if active is None:
        return np.arange(p + 1)
    active = sorted(set(int(j) for j in active))
    if active and (active[0] < 0 or active[-1] >= p):
        raise ValueError(f"active covariate indices must lie in 0..{p - 1}")
    return np.array([0] + [j + 1 for j in active], dtype=np.intp)


def initial_theta(d, active=None):
    """Mean imputation, then Newton on the completed design and Gaussian MLE."""
    x0 = mean_impute(d.x, d.mask)
    cols = _active_columns(d.p, active)
    beta = np.zeros(d.p + 1)
    beta[cols] = fit_newton(design(x0)[:, cols], d.y.astype(float))
    mu, sigma = gaussian_mle(x0)
    return Theta(beta=beta, mu=mu, sigma=repair_covariance(sigma))


def iteration_rng(seed, k):
    return np.random.default_rng([_SAEM_STREAM, seed, k])


def saem_fit(d, cfg=None, init=None, active=None):
    """Maximum likelihood estimate of theta by SAEM.

    Parameters
    ----------
    d : MaskedDataset
    cfg : SaemConfig, optional
    init : Theta, optional
        Starting point; default is the mean-imputation fit.
    active : iterable of int, optional
        0-based covariates whose coefficient is free. The others are held at
        zero; mu and Sigma always cover all covariates.

    Returns
    -------
    theta : Theta
    trace : SaemTrace
    """
    cfg = cfg or SaemConfig()
    d = d.sorted_by_id()
    n, p = d.n, d.p
    y = d.y.astype(float)
    cols = _active_columns(p, active)

    x = mean_impute(d.x, d.mask)
    if init is None:
        theta0 = initial_theta(d, active)
    else:
        theta0 = init
    beta = np.zeros(p + 1)
    beta[cols] = theta0.beta[cols]
    mu, sigma = np.array(theta0.mu), np.array(theta0.sigma)
    if init is None:
        stats = SuffStats(*gaussian_stats(x))
    else:
        stats = SuffStats(n * mu, n * (sigma + np.outer(mu, mu)))

    layout = MissingLayout(d.mask)
    n_inc, m_max = layout.n_rows, layout.m_max
    inc_rows = layout.rows
    S = cfg.mh_steps

    tr_beta = np.empty((cfg.n_iter, p + 1))
    tr_mu = np.empty((cfg.n_iter, p))
    tr_gamma = np.empty(cfg.n_iter)
    tr_acc = np.full(cfg.n_iter, np.nan)
    converged_at = None
    notes = []
    separated = False

    for k in range(1, cfg.n_iter + 1):
        g_k = gamma(k, cfg)
        if n_inc:
            rng = iteration_rng(cfg.seed, k)
            zn = rng.standard_normal((n_inc, m_max, S))
            log_u = np.log(rng.random((S, n_inc)))
            x_inc = x[inc_rows]
            ll_curr = bernoulli_loglik(beta[0] + x_inc @ beta[1:], y[inc_rows])
            q, lq = layout.precision_factors(sigma)
            means = layout.means(mu, q, lq, x)
            dev = layout.deviations(lq, zn)
            b_mis = np.where(layout.valid, beta[1:][layout.mis_pad], 0.0)
            base = beta[0] + np.where(layout.obs_mask, x_inc, 0.0) @ beta[1:] + (means * b_mis).sum(axis=1)
            eta_cand = base + np.matmul(b_mis[:, None, :], dev)[:, 0, :].T
            ll_cand = bernoulli_loglik(eta_cand, y[inc_rows])
            idx, accepts = independence_mh(ll_cand, ll_curr, log_u)
            tr_acc[k - 1] = accepts.sum() / (S * n_inc)
            moved = idx >= 0
            chosen = dev[np.arange(n_inc), :, np.maximum(idx, 0)]
            layout.fill(x, means + chosen, moved)

        stats.update(*gaussian_stats(x), g_k)
        z = design(x)[:, cols]
        b_hat, ok, _, _ = _newton(z, y, beta[cols].copy(), cfg.newton_tol, cfg.newton_max_iter)
        if not separated and _separated(z, y, b_hat, ok):
            separated = True
            msg = f"iteration {k}: inner Newton diverges, classes look separated"
            notes.append(msg)
            warnings.warn(msg, SeparationWarning, stacklevel=2)
        new_beta = beta.copy()
        if g_k == 1.0:
            new_beta[cols] = b_hat
        else:
            new_beta[cols] = beta[cols] + g_k * (b_hat - beta[cols])
        mu, sigma = gaussian_from_stats(stats.s1, stats.s2, n)
        sigma = repair_covariance(sigma)
        if converged_at is None and np.max(np.abs(new_beta - beta)) < cfg.beta_tol:
            converged_at = k
        beta = new_beta
        tr_beta[k - 1] = beta
        tr_mu[k - 1] = mu
        tr_gamma[k - 1] = g_k

    trace = SaemTrace(beta=tr_beta, mu=tr_mu, gamma=tr_gamma, acceptance=tr_acc,
                      converged_at=converged_at, warnings=notes)
    return Theta(beta=beta, mu=mu, sigma=sigma), trace
