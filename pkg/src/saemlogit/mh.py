"""Independence Metropolis-Hastings for p(x_mis | x_obs, y; theta).

The proposal is the conditional Gaussian g = p(x_mis | x_obs; mu, Sigma).
Since the target is proportional to p(y | x; beta) g(x_mis), the ratio
f/g of a state only depends on its Bernoulli likelihood, and a whole chain
can be run on the scalar log-likelihoods of the candidates. The vectorized
kernel below advances one chain per row for a batch of rows at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import condition, sample
from .logistic import bernoulli_loglik


@dataclass
class ChainState:
    """Current state and acceptance statistics of one chain."""

    current: np.ndarray
    accept_count: int = 0
    steps: int = 0

    @property
    def acceptance_rate(self):
        return self.accept_count / self.steps if self.steps else float("nan")


def _eta(beta, rv, x_mis):
    """Linear predictor for completions of ``rv`` by ``x_mis`` (shape (m,) or (s, m))."""
    x_mis = np.asarray(x_mis, dtype=float)
    base = beta[0] + beta[1:][rv.obs_idx] @ rv.x_obs
    return base + x_mis @ beta[1:][rv.mis_idx]


def acceptance_ratio(beta, rv, y_i, cand, curr):
    """MH ratio ``[f/g](cand) / [f/g](curr)`` = p(y | cand) / p(y | curr)."""
    beta = np.asarray(beta, dtype=float)
    ll = bernoulli_loglik(np.array([_eta(beta, rv, cand), _eta(beta, rv, curr)]), y_i)
    return float(np.exp(ll[0] - ll[1]))


def independence_mh(ll_cand, ll_curr, log_u, record=False):
    """Run independence-sampler chains on precomputed log-ratios.

    Parameters
    ----------
    ll_cand : ndarray, shape (S, r)
        ``log f/g`` of the candidate proposed at each step, one column per chain.
    ll_curr : ndarray, shape (r,)
        ``log f/g`` of the initial states.
    log_u : ndarray, shape (S, r)
        Logs of the uniform draws.
    record : bool
        Return the full path of selected candidate indices instead of the last.

    Returns
    -------
    idx : ndarray of int, shape (r,) or (S, r)
        Index of the candidate held by each chain (after each step if
        ``record``); ``-1`` means the chain still holds its initial state.
    accepts : ndarray of int, shape (r,)
    """
    S, r = ll_cand.shape
    idx = np.full(r, -1, dtype=np.intp)
    accepts = np.zeros(r, dtype=np.intp)
    path = np.empty((S, r), dtype=np.intp) if record else None
    ll_curr = np.array(ll_curr, dtype=float)
    for s in range(S):
        acc = log_u[s] < ll_cand[s] - ll_curr
        np.copyto(ll_curr, ll_cand[s], where=acc)
        np.copyto(idx, s, where=acc)
        accepts += acc
        if record:
            path[s] = idx
    return (path if record else idx), accepts


def run_chain(theta, rv, y_i, S, rng, init=None):
    """Run ``S`` steps of the independence sampler for one row.

    Parameters
    ----------
    theta : Theta
    rv : RowView
        Must have at least one missing coordinate.
    y_i : {0, 1}
    S : int
        Chain length.
    rng : numpy.random.Generator
    init : ndarray, optional
        Initial state; drawn from the proposal when omitted.

    Returns
    -------
    states : ndarray, shape (S, m)
    state : ChainState
    """
    if S < 1:
        raise ValueError("chain length must be >= 1")
    if rv.mis_idx.size == 0:
        raise ValueError("row has no missing coordinate; nothing to sample")
    g = condition(theta, rv)
    x0 = sample(g, rng) if init is None else np.asarray(init, dtype=float)
    cand = sample(g, rng, size=S)
    log_u = np.log(rng.random((S, 1)))
    beta = theta.beta
    ll_cand = bernoulli_loglik(_eta(beta, rv, cand), y_i)[:, None]
    ll0 = bernoulli_loglik(np.atleast_1d(_eta(beta, rv, x0)), y_i)
    path, accepts = independence_mh(ll_cand, ll0, log_u, record=True)
    path = path[:, 0]
    states = np.where((path >= 0)[:, None], cand[np.maximum(path, 0)], x0)
    return states, ChainState(current=states[-1].copy(), accept_count=int(accepts[0]), steps=S)
