"""Conditional multivariate normal algebra.

The law of the missing coordinates of a row given its observed ones is
Gaussian with mean ``mu_mis + A (x_obs - mu_obs)`` and Schur-complement
covariance. It is both the Metropolis-Hastings proposal and the importance
sampling density, so everything here works per missingness pattern: the
regression matrix ``A`` and the Cholesky factor of the conditional
covariance are shared by every row with the same pattern.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import SingularCovarianceError

LOG_2PI = np.log(2.0 * np.pi)
COND_LIMIT = 1e12


def cholesky(a, row=None, what="covariance"):
    """Lower Cholesky factor with a single jitter retry.

    A factorization whose condition estimate ``(max diag / min diag)**2``
    exceeds ``1e12`` counts as a failure. On failure ``1e-8 * trace / k`` is
    added to the diagonal once before giving up.
    """
    a = np.asarray(a, dtype=float)
    k = a.shape[0]
    if k == 0:
        return np.zeros((0, 0))
    for attempt in range(2):
        try:
            chol = np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            chol = None
        if chol is not None:
            d = np.diag(chol)
            if d.min() > 0 and (d.max() / d.min()) ** 2 <= COND_LIMIT:
                return chol
        if attempt == 0:
            jitter = 1e-8 * max(np.trace(a), 0.0) / k
            if jitter == 0.0:
                break
            a = a + jitter * np.eye(k)
    raise SingularCovarianceError(f"{what} is numerically singular", row=row)


@dataclass(frozen=True)
class ConditionalGaussian:
    """Gaussian law of the missing coordinates of one row.

    Attributes
    ----------
    mu_c : ndarray, shape (m,)
    sigma_c : ndarray, shape (m, m)
    chol_c : ndarray, shape (m, m)
        Lower Cholesky factor of ``sigma_c``.
    """

    mu_c: np.ndarray
    sigma_c: np.ndarray
    chol_c: np.ndarray

    @property
    def m(self):
        return self.mu_c.shape[0]

    @classmethod
    def from_moments(cls, mu_c, sigma_c):
        mu_c = np.atleast_1d(np.asarray(mu_c, dtype=float))
        sigma_c = np.atleast_2d(np.asarray(sigma_c, dtype=float))
        return cls(mu_c=mu_c, sigma_c=sigma_c, chol_c=cholesky(sigma_c))


@dataclass(frozen=True)
class PatternConditional:
    """Conditional law shared by all rows with one missingness pattern.

    ``mean(x_obs) = shift + x_obs @ coef.T`` with ``shift = mu_mis - coef @ mu_obs``.
    """

    obs_idx: np.ndarray
    mis_idx: np.ndarray
    coef: np.ndarray
    shift: np.ndarray
    sigma_c: np.ndarray
    chol_c: np.ndarray

    def means(self, x_obs):
        """Conditional means for rows of observed values, shape (r, m)."""
        return self.shift + np.asarray(x_obs) @ self.coef.T


def pattern_conditional(mu, sigma, obs_idx, mis_idx, row=None):
    """Conditional law of ``x[mis_idx]`` given ``x[obs_idx]`` under N(mu, sigma).

    Solves with the Cholesky factor of the observed block; no explicit inverse.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    obs_idx = np.asarray(obs_idx, dtype=np.intp)
    mis_idx = np.asarray(mis_idx, dtype=np.intp)
    s_mm = sigma[np.ix_(mis_idx, mis_idx)]
    if obs_idx.size == 0:
        coef = np.zeros((mis_idx.size, 0))
        sigma_c = s_mm
    else:
        chol_oo = cholesky(sigma[np.ix_(obs_idx, obs_idx)], row=row, what="observed covariance block")
        w = np.linalg.solve(chol_oo, sigma[np.ix_(obs_idx, mis_idx)])
        sigma_c = s_mm - w.T @ w
        sigma_c = 0.5 * (sigma_c + sigma_c.T)
        coef = np.linalg.solve(chol_oo.T, w).T
    shift = mu[mis_idx] - coef @ mu[obs_idx]
    chol_c = cholesky(sigma_c, row=row, what="conditional covariance")
    return PatternConditional(obs_idx=obs_idx, mis_idx=mis_idx, coef=coef, shift=shift,
                              sigma_c=sigma_c, chol_c=chol_c)


def condition(theta, rv, row=None):
    """Conditional Gaussian of the missing coordinates of ``rv`` under ``theta``.

    Raises
    ------
    ValueError
        If the row has no missing coordinate.
    SingularCovarianceError
        If the observed covariance block cannot be factorized.
    """
    if rv.mis_idx.size == 0:
        raise ValueError("row has no missing coordinate to condition on")
    pc = pattern_conditional(theta.mu, theta.sigma, rv.obs_idx, rv.mis_idx, row=row)
    return ConditionalGaussian(mu_c=pc.means(rv.x_obs), sigma_c=pc.sigma_c, chol_c=pc.chol_c)


def sample(cg, rng, size=None):
    """Draw ``mu_c + chol_c @ z`` with ``z`` standard normal.

    ``size=None`` returns one vector of length m; an integer returns ``(size, m)``.
    """
    shape = (cg.m,) if size is None else (size, cg.m)
    z = rng.standard_normal(shape)
    return cg.mu_c + z @ cg.chol_c.T


def mvn_logpdf(v, mean, chol):
    """log N(v; mean, chol chol^T) for ``v`` of shape (..., k)."""
    v = np.asarray(v, dtype=float)
    k = chol.shape[0]
    if v.shape[-1] != k:
        raise ValueError(f"dimension mismatch: expected {k}, got {v.shape[-1]}")
    if k == 0:
        return np.zeros(v.shape[:-1])
    diff = (v - mean).reshape(-1, k)
    sol = np.linalg.solve(chol, diff.T)
    maha = np.einsum("ij,ij->j", sol, sol).reshape(v.shape[:-1])
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (k * LOG_2PI + logdet + maha)


def log_density(cg, v):
    """Exact log density of ``cg`` at ``v`` (shape (m,) or (s, m))."""
    out = mvn_logpdf(v, cg.mu_c, cg.chol_c)
    return float(out) if np.ndim(out) == 0 else out


def marginal_log_density(theta, rv, row=None):
    """log N(x_obs; mu_obs, sigma_obs,obs). A row with nothing observed gives 0."""
    obs = rv.obs_idx
    if obs.size == 0:
        return 0.0
    chol = cholesky(theta.sigma[np.ix_(obs, obs)], row=row, what="observed covariance block")
    return float(mvn_logpdf(rv.x_obs, theta.mu[obs], chol))


def _tri_inverse(lower):
    """Inverses of a stack of small lower-triangular factors."""
    k = lower.shape[-1]
    eye = np.broadcast_to(np.eye(k), lower.shape)
    return np.linalg.solve(lower, eye)


class MissingLayout:
    """Padded index bookkeeping for the incomplete rows of a mask.

    Every incomplete row gets its missing coordinates padded to ``m_max``
    slots. The conditional law of a row's missing block is computed from the
    precision matrix ``Q = Sigma^{-1}``: precision ``Q_mm`` and mean
    ``mu_m - Q_mm^{-1} Q_m,: (x - mu)`` with the missing entries of ``x - mu``
    zeroed. Padding slots get unit precision and are never read back.
    """

    def __init__(self, mask):
        mask = np.asarray(mask, dtype=bool)
        self.n, self.p = mask.shape
        self.rows = np.flatnonzero(mask.any(axis=1))
        sub = mask[self.rows]
        counts = sub.sum(axis=1)
        self.m_max = int(counts.max()) if self.rows.size else 0
        m = self.m_max
        self.valid = np.arange(m)[None, :] < counts[:, None]
        # stable sort puts True (missing) first, keeping column order
        order = np.argsort(~sub, axis=1, kind="stable")[:, :m]
        self.mis_pad = np.where(self.valid, order, 0)
        self.obs_mask = ~sub
        uniq, pid = np.unique(sub, axis=0, return_inverse=True)
        self.pattern_id = pid.ravel()
        self.pattern_pad = np.zeros((len(uniq), m), dtype=np.intp)
        self.pattern_valid = np.zeros((len(uniq), m), dtype=bool)
        for k in range(len(uniq)):
            i = np.flatnonzero(self.pattern_id == k)[0]
            self.pattern_pad[k] = self.mis_pad[i]
            self.pattern_valid[k] = self.valid[i]
        self.flat_index = (self.rows[:, None] * self.p + self.mis_pad)
        eye = np.eye(m, dtype=bool)
        self._pv2 = self.pattern_valid[:, :, None] & self.pattern_valid[:, None, :]
        self._pad_diag = eye[None] & ~self._pv2

    @property
    def n_rows(self):
        return self.rows.size

    def precision_factors(self, sigma):
        """Cholesky factors of the padded missing-block precisions, one per pattern.

        Returns ``(Q, L)`` with ``Q = Sigma^{-1}`` and ``L[k] L[k]^T`` the padded
        ``Q_mm`` of pattern ``k``.
        """
        chol = cholesky(sigma, what="covariance")
        q = np.linalg.solve(chol.T, np.linalg.solve(chol, np.eye(self.p)))
        q = 0.5 * (q + q.T)
        pad = self.pattern_pad
        qmm = q[pad[:, :, None], pad[:, None, :]]
        qmm = np.where(self._pv2, qmm, self._pad_diag.astype(float))
        try:
            lq = np.linalg.cholesky(qmm)
        except np.linalg.LinAlgError:
            raise SingularCovarianceError("missing-block precision is not positive definite") from None
        return q, lq

    def means(self, mu, q, lq, x):
        """Padded conditional means of the missing blocks, shape (r, m_max)."""
        xr = np.asarray(x)[self.rows]
        diff = np.where(self.obs_mask, xr - mu, 0.0)
        resid = np.einsum("rjp,rp->rj", q[self.mis_pad], diff)
        resid = np.where(self.valid, resid, 0.0)
        linv = _tri_inverse(lq)
        cov = np.swapaxes(linv, 1, 2) @ linv
        return mu[self.mis_pad] - np.einsum("rjk,rk->rj", cov[self.pattern_id], resid)

    def deviations(self, lq, z):
        """Map standard normals ``z`` (r, m_max, s) to conditional deviations.

        With ``Q_mm = L L^T`` the conditional covariance is ``L^{-T} L^{-1}``,
        so ``L^{-T} z`` has the right law.
        """
        factor = np.swapaxes(_tri_inverse(lq), 1, 2)
        return np.matmul(factor[self.pattern_id], z)

    def fill(self, x, values, rows_sel=None):
        """Write padded missing-block ``values`` (r, m_max) into ``x`` in place."""
        sel = self.valid if rows_sel is None else self.valid & rows_sel[:, None]
        x.flat[self.flat_index[sel]] = values[sel]
        return x
