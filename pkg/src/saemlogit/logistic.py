"""Complete-data logistic model and Gaussian covariate MLE.

Design matrices carry the intercept column: ``z = [1, x_1, ..., x_p]``.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.special import expit

from .exceptions import ConvergenceWarning, SeparationWarning, SingularHessianError
from .gaussian import LOG_2PI

SEPARATION_BOUND = 30.0


def design(x):
    """Prepend the intercept column to a covariate matrix."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.hstack([np.ones((x.shape[0], 1)), x])


def predict_prob(beta, z):
    """P(y = 1 | z) = sigmoid(beta . z), overflow-free."""
    return expit(np.asarray(z, dtype=float) @ np.asarray(beta, dtype=float))


def bernoulli_loglik(eta, y):
    """Elementwise log p(y | eta) for linear predictor ``eta``."""
    eta = np.asarray(eta, dtype=float)
    # log sigmoid(eta) if y == 1, log sigmoid(-eta) if y == 0
    return -np.logaddexp(0.0, np.where(np.asarray(y) == 1, -eta, eta))


def logistic_loglik(beta, z, y):
    return float(bernoulli_loglik(np.asarray(z) @ beta, y).sum())


def gaussian_loglik(x, mu, sigma):
    """Sum over rows of log N(x_i; mu, sigma)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    chol = np.linalg.cholesky(sigma)
    diff = np.linalg.solve(chol, (x - mu).T)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    p = x.shape[1]
    return float(-0.5 * (x.shape[0] * (p * LOG_2PI + logdet) + np.sum(diff * diff)))


def complete_loglik(theta, z, y):
    """Complete-data log-likelihood: Bernoulli terms plus Gaussian covariate terms."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    y = np.atleast_1d(y)
    return logistic_loglik(theta.beta, z, y) + gaussian_loglik(z[:, 1:], theta.mu, theta.sigma)


def score_and_hessian(beta, z, y):
    """Gradient and Hessian in beta of the Bernoulli log-likelihood of one row.

    ``grad = z (y - s)`` and ``hess = -s (1 - s) z z^T`` with ``s = sigmoid(beta . z)``.
    """
    z = np.asarray(z, dtype=float)
    s = expit(z @ beta)
    return z * (y - s), -s * (1.0 - s) * np.outer(z, z)


def _newton(z, y, beta, tol, max_iter):
    """Damped Newton ascent. Returns ``(beta, converged, iterations, grad)``."""
    ll = logistic_loglik(beta, z, y)
    grad = None
    for it in range(max_iter + 1):
        s = expit(z @ beta)
        grad = z.T @ (y - s)
        if np.max(np.abs(grad)) < tol:
            return beta, True, it, grad
        if it == max_iter:
            break
        w = s * (1.0 - s)
        info = (z * w[:, None]).T @ z
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise SingularHessianError("logistic Hessian is singular") from None
        if not np.all(np.isfinite(step)):
            raise SingularHessianError("logistic Hessian is singular")
        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            ll_new = logistic_loglik(cand, z, y)
            if ll_new >= ll - 1e-12 * (1.0 + abs(ll)):
                break
            t *= 0.5
        else:
            # no ascent along the Newton direction; iterate is as good as it gets
            return beta, False, it, grad
        beta, ll = cand, ll_new
    return beta, False, max_iter, grad


def separated(z, y, beta, converged=True):
    """Heuristic separation flag: large coefficients that stopped improving or split the classes."""
    if np.max(np.abs(beta)) <= SEPARATION_BOUND:
        return False
    if not converged:
        return True
    eta = z @ beta
    y = np.asarray(y)
    pos, neg = eta[y == 1], eta[y == 0]
    return pos.size == 0 or neg.size == 0 or pos.min() >= neg.max()


def fit_newton(z, y, tol=1e-8, max_iter=100, beta0=None, warn=True):
    """Maximum likelihood logistic regression by Newton-Raphson with step halving.

    Parameters
    ----------
    z : ndarray, shape (n, q)
        Complete design matrix, intercept column included.
    y : ndarray, shape (n,)
    tol : float
        Convergence threshold on the sup-norm of the gradient.
    max_iter : int
    beta0 : ndarray, optional
        Starting point (default zero).
    warn : bool
        Emit ``SeparationWarning`` / ``ConvergenceWarning`` on failure.

    Returns
    -------
    ndarray, shape (q,)
        The last iterate, even when it did not converge.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    y = np.asarray(y, dtype=float)
    n, q = z.shape
    if n <= q:
        raise ValueError(f"need more rows ({n}) than coefficients ({q})")
    beta = np.zeros(q) if beta0 is None else np.array(beta0, dtype=float)
    beta, converged, _, grad = _newton(z, y, beta, tol, max_iter)
    if warn and separated(z, y, beta, converged):
        warnings.warn(
                f"coefficients diverge (|beta|_inf = {np.max(np.abs(beta)):.3g}); "
            "classes look separated, returning last iterate", SeparationWarning, stacklevel=2)
    elif warn and not converged:
        warnings.warn(f"Newton stopped after {max_iter} iterations with "
                      f"|grad|_inf = {np.max(np.abs(grad)):.3g}", ConvergenceWarning, stacklevel=2)
    return beta


def logistic_information(beta, z):
    """Fisher information ``Z^T W Z`` of the logistic model at ``beta``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    s = expit(z @ beta)
    w = s * (1.0 - s)
    return (z * w[:, None]).T @ z


def gaussian_from_stats(s1, s2, n):
    """Mean and ML covariance from sums ``s1 = sum x_i`` and ``s2 = sum x_i x_i^T``."""
    mu = s1 / n
    sigma = s2 / n - np.outer(mu, mu)
    return mu, 0.5 * (sigma + sigma.T)


def gaussian_stats(x):
    x = np.asarray(x, dtype=float)
    return x.sum(axis=0), x.T @ x


def gaussian_mle(x):
    """Column means and divisor-n covariance of a complete matrix."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two rows")
    s1, s2 = gaussian_stats(x)
    return gaussian_from_stats(s1, s2, n)
