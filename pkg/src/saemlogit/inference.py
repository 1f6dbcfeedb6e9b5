"""Standard errors, observed log-likelihood and BIC for a fitted model.

The observed information of beta is estimated with Louis' identity from
Metropolis-Hastings draws of the missing covariates; the observed
log-likelihood by importance sampling with the conditional Gaussian of the
missing covariates as proposal.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp
from scipy.stats import norm

from .data import Theta, group_patterns
from .exceptions import FisherInformationWarning, ImportanceSamplingError, SingularHessianError
from .gaussian import LOG_2PI, MissingLayout, cholesky, mvn_logpdf
from .logistic import bernoulli_loglik, design, logistic_information
from .mh import independence_mh
from .saem import SaemConfig, _active_columns, saem_fit

_FIM_STREAM = 0x10015
_LL_STREAM = 0x11C
_FIM_CHUNK = 128


class FimAccumulators:
    """Running means of score, Hessian and score outer product for a batch of rows.

    Each call to :meth:`update` folds in one more sample per row with the
    recursion ``a <- ((s - 1) a + new) / s``; :meth:`update_batch` folds in
    ``b`` samples at once, ``a <- (s a + sum(new)) / (s + b)``.
    """

    def __init__(self, n_rows, q):
        self.delta = np.zeros((n_rows, q))
        self.d = np.zeros((n_rows, q, q))
        self.g = np.zeros((n_rows, q, q))
        self.count = 0

    def update(self, grad, hess):
        self.count += 1
        s = self.count
        self.delta = ((s - 1) * self.delta + grad) / s
        self.d = ((s - 1) * self.d + hess) / s
        self.g = ((s - 1) * self.g + grad[:, :, None] * grad[:, None, :]) / s

    def update_batch(self, grad, hess):
        """``grad`` of shape (r, b, q), ``hess`` of shape (r, b, q, q)."""
        s, b = self.count, grad.shape[1]
        self.count = s + b
        self.delta = (s * self.delta + grad.sum(axis=1)) / (s + b)
        self.d = (s * self.d + hess.sum(axis=1)) / (s + b)
        self.g = (s * self.g + np.einsum("rba,rbc->rac", grad, grad)) / (s + b)

    def information(self):
        """``-sum_i (D_i + G_i - Delta_i Delta_i^T)``."""
        outer = self.delta[:, :, None] * self.delta[:, None, :]
        return -(self.d + self.g - outer).sum(axis=0)


def _draw_completions(theta, d, layout, n_samples, rng, burn_in):
    """Independence MH draws of the missing blocks of every incomplete row.

    Returns padded missing-block states of shape (r, m_max, n_samples),
    burn-in removed.
    """
    beta = theta.beta
    total = burn_in + n_samples
    r, m = layout.n_rows, layout.m_max
    q, lq = layout.precision_factors(theta.sigma)
    means = layout.means(theta.mu, q, lq, d.x)
    y = d.y[layout.rows].astype(float)
    z0 = rng.standard_normal((r, m, 1))
    zc = rng.standard_normal((r, m, total))
    log_u = np.log(rng.random((total, r)))
    dev0 = layout.deviations(lq, z0)[:, :, 0]
    dev = layout.deviations(lq, zc)
    b_mis = np.where(layout.valid, beta[1:][layout.mis_pad], 0.0)
    x_obs0 = np.where(layout.obs_mask, d.x[layout.rows], 0.0)
    base = beta[0] + x_obs0 @ beta[1:] + (means * b_mis).sum(axis=1)
    ll0 = bernoulli_loglik(base + (dev0 * b_mis).sum(axis=1), y)
    ll_cand = bernoulli_loglik(base + np.matmul(b_mis[:, None, :], dev)[:, 0, :].T, y)
    path, _ = independence_mh(ll_cand, ll0, log_u, record=True)
    path = path[burn_in:].T  # (r, n_samples)
    held = np.take_along_axis(dev, np.maximum(path, 0)[:, None, :], axis=2)
    held = np.where((path >= 0)[:, None, :], held, dev0[:, :, None])
    return means[:, :, None] + held


def louis_fim(theta, d, S=1000, rng=None, burn_in=100):
    """Observed Fisher information of beta by Louis' identity.

    Parameters
    ----------
    theta : Theta
        Usually the SAEM estimate.
    d : MaskedDataset
    S : int
        Retained MH draws per incomplete row.
    rng : numpy.random.Generator
    burn_in : int
        MH states discarded before accumulation.

    Returns
    -------
    ndarray, shape (p+1, p+1)

    Notes
    -----
    A complete row contributes its classical logistic information
    ``s (1 - s) z z^T``; no sampling is involved.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    beta = theta.beta
    complete = ~d.mask.any(axis=1)
    info = logistic_information(beta, design(d.x[complete]))
    layout = MissingLayout(d.mask)
    if layout.n_rows:
        mis = _draw_completions(theta, d, layout, S, rng, burn_in)
        y = d.y[layout.rows].astype(float)
        zfull = design(np.where(layout.obs_mask, d.x[layout.rows], 0.0))
        acc = FimAccumulators(layout.n_rows, d.p + 1)
        ri, rj = np.nonzero(layout.valid)
        ci = layout.mis_pad[ri, rj] + 1
        for lo in range(0, S, _FIM_CHUNK):
            hi = min(lo + _FIM_CHUNK, S)
            z = np.repeat(zfull[:, None, :], hi - lo, axis=1)
            z[ri, :, ci] = mis[ri, rj, lo:hi]
            prob = expit(z @ beta)
            grad = z * (y[:, None] - prob)[:, :, None]
            hess = -(prob * (1.0 - prob))[:, :, None, None] * z[:, :, :, None] * z[:, :, None, :]
            acc.update_batch(grad, hess)
        info = info + acc.information()
    info = 0.5 * (info + info.T)
    smallest = np.linalg.eigvalsh(info).min()
    if smallest <= 0:
        warnings.warn(f"information matrix not positive definite (smallest eigenvalue {smallest:.3g})",
                      FisherInformationWarning, stacklevel=2)
    return info


def wald_ci(fim, beta_hat, level=0.95):
    """Standard errors ``sqrt(diag(fim^-1))`` and Wald intervals.

    Raises
    ------
    SingularHessianError
        If ``fim`` is rank deficient.
    """
    fim = np.atleast_2d(np.asarray(fim, dtype=float))
    beta_hat = np.asarray(beta_hat, dtype=float)
    if np.linalg.matrix_rank(fim) < fim.shape[0]:
        raise SingularHessianError("information matrix is singular")
    cov = np.linalg.inv(fim)
    var = np.diag(cov)
    if np.any(var <= 0):
        warnings.warn("non-positive variance estimates; standard errors set to NaN",
                      FisherInformationWarning, stacklevel=2)
    se = np.sqrt(np.where(var > 0, var, np.nan))
    zq = norm.ppf(0.5 + level / 2.0)
    return se, beta_hat - zq * se, beta_hat + zq * se


def _complete_row_loglik(theta, x, y):
    chol = cholesky(theta.sigma)
    return bernoulli_loglik(design(x) @ theta.beta, y) + mvn_logpdf(x, theta.mu, chol)


def obs_loglik(theta, d, S=1000, rng=None, per_row=False, method="importance"):
    """Observed-data log-likelihood ``sum_i log p(y_i, x_obs,i; theta)``.

    Parameters
    ----------
    theta : Theta
    d : MaskedDataset
    S : int
        Importance draws per incomplete row, i.i.d. from the conditional
        Gaussian of the missing block.
    rng : numpy.random.Generator
    per_row : bool
        Also return the per-row log-densities (useful to spot outliers).
    method : {"importance", "factorized"}
        ``"importance"`` averages ``p(y, x_obs | x_mis) p(x_mis) / g(x_mis)``;
        ``"factorized"`` uses the equivalent ``p(x_obs) mean_s p(y | x_obs, x_mis)``.

    Raises
    ------
    ImportanceSamplingError
        When every weight of a row underflows.
    """
    if method not in ("importance", "factorized"):
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng() if rng is None else rng
    rows_ll = np.empty(d.n)
    complete = ~d.mask.any(axis=1)
    y = d.y.astype(float)
    if complete.any():
        rows_ll[complete] = _complete_row_loglik(theta, d.x[complete], y[complete])
    layout = MissingLayout(d.mask)
    if layout.n_rows:
        r, m = layout.n_rows, layout.m_max
        q, lq = layout.precision_factors(theta.sigma)
        means = layout.means(theta.mu, q, lq, d.x)
        dev = layout.deviations(lq, rng.standard_normal((r, m, S)))
        draws = means[:, :, None] + dev
        xr = np.where(layout.obs_mask, d.x[layout.rows], 0.0)
        yr = y[layout.rows]
        b_mis = np.where(layout.valid, theta.beta[1:][layout.mis_pad], 0.0)
        eta = (theta.beta[0] + xr @ theta.beta[1:])[:, None] + np.einsum("rjs,rj->rs", draws, b_mis)
        ll_y = bernoulli_loglik(eta, yr[:, None])
        if method == "importance":
            full = np.repeat(xr[:, :, None], S, axis=2)
            sel = layout.valid
            ri = np.nonzero(sel)
            full[ri[0], layout.mis_pad[sel], :] = draws[ri[0], ri[1], :]
            log_joint = mvn_logpdf(np.moveaxis(full, 2, 1), theta.mu, cholesky(theta.sigma))
            # log g: Gaussian with precision Q_mm = L L^T, padding slots excluded
            lqr = lq[layout.pattern_id]
            quad = np.matmul(np.swapaxes(lqr, 1, 2), dev)
            quad = np.where(sel[:, :, None], quad, 0.0)
            diag = np.diagonal(lqr, axis1=1, axis2=2)
            half_logdet = np.where(sel, np.log(diag), 0.0).sum(axis=1)
            mcount = sel.sum(axis=1)
            log_g = -0.5 * (mcount * LOG_2PI)[:, None] + half_logdet[:, None] - 0.5 * (quad ** 2).sum(axis=1)
            lw = ll_y + log_joint - log_g
            est = logsumexp(lw, axis=1) - np.log(S)
        else:
            log_obs = np.zeros(r)
            for pt in group_patterns(~layout.obs_mask):
                if pt.obs_idx.size == 0:
                    continue
                obs = pt.obs_idx
                chol = cholesky(theta.sigma[np.ix_(obs, obs)])
                log_obs[pt.rows] = mvn_logpdf(xr[np.ix_(pt.rows, obs)], theta.mu[obs], chol)
            est = log_obs + logsumexp(ll_y, axis=1) - np.log(S)
        bad = np.flatnonzero(~np.isfinite(est))
        if bad.size:
            raise ImportanceSamplingError("all importance weights underflow",
                                          row=int(d.row_ids[layout.rows[bad[0]]]))
        rows_ll[layout.rows] = est
    total = float(rows_ll.sum())
    return (total, rows_ll) if per_row else total


def n_params(p, active=None):
    """Free parameters: intercept, active slopes, mean and covariance."""
    k = p if active is None else len(set(active))
    return 1 + k + p + p * (p + 1) // 2


def bic(loglik_obs, n, active, p):
    """``-2 loglik + log(n) d`` with ``d`` counting intercept, active slopes and the Gaussian law."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return -2.0 * loglik_obs + np.log(n) * n_params(p, active)


@dataclass
class FitResult:
    """Estimate, uncertainty and likelihood summaries of one fitted model.

    Coefficients excluded from the model (``active``) have NaN standard errors
    and intervals.
    """

    theta: Theta
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    loglik_obs: float
    bic: float
    n_params: int
    active: tuple
    n: int
    columns: tuple = ()
    fim: np.ndarray | None = None
    level: float = 0.95
    diagnostics: dict = field(default_factory=dict)
    trace: object = field(default=None, repr=False, compare=False)

    def to_dict(self):
        def arr(a):
            return [None if not np.isfinite(v) else float(v) for v in np.ravel(a)]
        return {
            "columns": list(self.columns),
            "active": list(self.active),
            "beta": self.theta.beta.tolist(),
            "mu": self.theta.mu.tolist(),
            "sigma": self.theta.sigma.tolist(),
            "se": arr(self.se),
            "ci_low": arr(self.ci_low),
            "ci_high": arr(self.ci_high),
            "level": self.level,
            "loglik": self.loglik_obs,
            "bic": self.bic,
            "n_params": self.n_params,
            "n": self.n,
            "fim": None if self.fim is None else self.fim.tolist(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d):
        def arr(a):
            return np.array([np.nan if v is None else v for v in a], dtype=float)
        return cls(
            theta=Theta(beta=d["beta"], mu=d["mu"], sigma=d["sigma"]),
            se=arr(d["se"]), ci_low=arr(d["ci_low"]), ci_high=arr(d["ci_high"]),
            loglik_obs=d["loglik"], bic=d["bic"], n_params=d["n_params"],
            active=tuple(d["active"]), n=d["n"], columns=tuple(d.get("columns", ())),
            fim=None if d.get("fim") is None else np.array(d["fim"]),
            level=d.get("level", 0.95), diagnostics=d.get("diagnostics", {}),
        )

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_model(d, cfg=None, active=None, fim_samples=1000, loglik_samples=1000, level=0.95,
              init=None, with_loglik=True, with_fim=True):
    """SAEM fit followed by Louis standard errors, observed log-likelihood and BIC.

    Parameters
    ----------
    d : MaskedDataset
    cfg : SaemConfig, optional
    active : iterable of int, optional
        0-based covariates in the model; default all.
    fim_samples, loglik_samples : int
        Monte Carlo sizes for the information matrix and the likelihood.
    with_loglik, with_fim : bool
        Skip the likelihood (and BIC) or the standard errors, which saves
        time in studies that only need one of them.
    """
    cfg = cfg or SaemConfig()
    p = d.p
    active = tuple(range(p)) if active is None else tuple(sorted(set(int(j) for j in active)))
    theta, trace = saem_fit(d, cfg, init=init, active=active)
    cols = _active_columns(p, active)
    se = np.full(p + 1, np.nan)
    lo, hi = se.copy(), se.copy()
    fim = None
    if with_fim:
        fim_full = louis_fim(theta, d, S=fim_samples, rng=np.random.default_rng([_FIM_STREAM, cfg.seed]))
        fim = fim_full[np.ix_(cols, cols)]
        se[cols], lo[cols], hi[cols] = wald_ci(fim, theta.beta[cols], level)
    ll = bic_value = np.nan
    if with_loglik:
        ll = obs_loglik(theta, d, S=loglik_samples, rng=np.random.default_rng([_LL_STREAM, cfg.seed]))
        bic_value = bic(ll, d.n, active, p)
    diagnostics = {
        "iterations": len(trace),
        "converged_at": trace.converged_at,
        "final_acceptance": None if np.isnan(trace.acceptance[-1]) else float(trace.acceptance[-1]),
        "warnings": list(trace.warnings),
    }
    result = FitResult(theta=theta, se=se, ci_low=lo, ci_high=hi, loglik_obs=ll, bic=bic_value,
                       n_params=n_params(p, active), active=active, n=d.n, columns=d.columns,
                       fim=fim, level=level, diagnostics=diagnostics, trace=trace)
    return result
