"""Synthetic designs, missingness mechanisms, scoring and replication studies."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit
from scipy.stats import rankdata

from .data import MaskedDataset, column_means, mean_impute
from .inference import fit_model
from .logistic import design, fit_newton, logistic_information
from .saem import SaemConfig
from .selection import predict_proba, predict_proba_imputed

logger = logging.getLogger(__name__)

BETA_TRUE = np.array([-0.2, 0.5, -0.3, 1.0, 0.0, -0.6])
BETA_SELECTION = np.array([-0.2, 0.5, 0.0, 1.0, 0.0, -0.6])
MU_TRUE = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
MU_MIXTURE = np.ones(5)
SD_TRUE = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
CORR_C = np.array([
    [1.0, 0.8, 0.0, 0.0, 0.0],
    [0.8, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.3, 0.6],
    [0.0, 0.0, 0.3, 1.0, 0.7],
    [0.0, 0.0, 0.6, 0.7, 1.0],
])
SIGMA_TRUE = np.outer(SD_TRUE, SD_TRUE) * CORR_C

METHODS = ("saem", "complete_case", "mean_impute", "complete_data")


@dataclass(frozen=True)
class SimDesign:
    """Data-generating process of a simulation study.

    ``covariate_law`` is ``"gaussian"``, ``"student"`` (scale matrix
    ``sigma_true``, ``df`` degrees of freedom) or ``"mixture"`` (first half of
    the rows centred at ``mu_true``, second half at ``mu_mixture``).
    ``missing`` is ``"mcar"`` (each cell missing with probability ``rate``)
    or ``"mar"`` (see :func:`mar_mask`).
    """

    n: int = 1000
    beta_true: np.ndarray = field(default_factory=lambda: BETA_TRUE.copy())
    mu_true: np.ndarray = field(default_factory=lambda: MU_TRUE.copy())
    sigma_true: np.ndarray = field(default_factory=lambda: SIGMA_TRUE.copy())
    covariate_law: str = "gaussian"
    df: float = 5.0
    mu_mixture: np.ndarray = field(default_factory=lambda: MU_MIXTURE.copy())
    missing: str = "mcar"
    rate: float = 0.1
    pattern_prob: float = 0.5
    mar_weights: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        beta = np.asarray(self.beta_true, dtype=float)
        mu = np.asarray(self.mu_true, dtype=float)
        sigma = np.asarray(self.sigma_true, dtype=float)
        p = mu.size
        if beta.size != p + 1 or sigma.shape != (p, p):
            raise ValueError("inconsistent dimensions in design")
        np.linalg.cholesky(sigma)
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("rate must lie in [0, 1)")
        if self.covariate_law not in ("gaussian", "student", "mixture"):
            raise ValueError(f"unknown covariate law {self.covariate_law!r}")
        if self.missing not in ("mcar", "mar"):
            raise ValueError(f"unknown missingness mechanism {self.missing!r}")
        object.__setattr__(self, "beta_true", beta)
        object.__setattr__(self, "mu_true", mu)
        object.__setattr__(self, "sigma_true", sigma)

    @property
    def p(self):
        return self.mu_true.size

    def replace(self, **kw):
        return replace(self, **kw)


def preset(name, n=1000, rate=0.1, separability=1.0, correlated=True, seed=0):
    """Named designs used by the command line ``simulate`` subcommand.

    ``separability`` scales the true coefficients (1, 3 and 10 give
    increasingly separated classes). ``correlated=False`` replaces the
    correlation matrix by the identity.
    """
    sigma = SIGMA_TRUE if correlated else np.diag(SD_TRUE ** 2)
    base = SimDesign(n=n, rate=rate, sigma_true=sigma, seed=seed,
                     beta_true=BETA_TRUE * separability)
    if name == "default":
        return base
    if name == "mar":
        return base.replace(missing="mar")
    if name in ("student5", "student20"):
        return base.replace(covariate_law="student", df=float(name[7:]))
    if name == "mixture":
        return base.replace(covariate_law="mixture")
    if name == "null-model":
        beta = np.zeros(6)
        beta[0] = BETA_TRUE[0]
        return base.replace(beta_true=beta)
    if name == "selection":
        return base.replace(beta_true=BETA_SELECTION * separability)
    raise ValueError(f"unknown design {name!r}")


PRESETS = ("default", "mar", "student5", "student20", "mixture", "null-model", "selection")


def draw_covariates(design_, rng, n=None):
    n = design_.n if n is None else n
    chol = np.linalg.cholesky(design_.sigma_true)
    dev = rng.standard_normal((n, design_.p)) @ chol.T
    if design_.covariate_law == "student":
        scale = np.sqrt(design_.df / rng.chisquare(design_.df, size=n))
        return design_.mu_true + dev * scale[:, None]
    if design_.covariate_law == "mixture":
        centers = np.where((np.arange(n) < n // 2)[:, None], design_.mu_true, design_.mu_mixture)
        return centers + dev
    return design_.mu_true + dev


def mcar_mask(shape, rate, rng):
    return rng.random(shape) < rate


def mar_mask(x, pattern_prob=0.5, phi=None, target_rate=0.1, rng=None, tol=0.005,
             return_offset=False, pattern=None):
    """Missing-at-random mask driven by always-observed coordinates.

    Each row draws a pattern ``eta`` with ``eta_j ~ Bernoulli(pattern_prob)``
    (redrawn if all zero). Coordinates with ``eta_j = 1`` are always
    observed. Each of the others goes missing independently with probability
    ``sigmoid(phi0 + sum_{eta_j = 1} phi_j xs_j)`` where ``xs`` are the
    standardized covariates. The offset ``phi0`` is found by bisection so that
    the realized fraction of missing cells is within ``tol`` of
    ``target_rate``.

    Parameters
    ----------
    x : ndarray, shape (n, p)
        Complete covariates.
    phi : array_like, shape (p,), optional
        Weights of the conditioning coordinates, default all ones.
    pattern : array_like of bool, shape (p,) or (n, p), optional
        Fixed always-observed indicators instead of random ones.
    """
    rng = np.random.default_rng() if rng is None else rng
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    phi = np.ones(p) if phi is None else np.asarray(phi, dtype=float)
    if pattern is not None:
        eta = np.broadcast_to(np.asarray(pattern, dtype=bool), (n, p)).copy()
        if not eta.any(axis=1).all():
            raise ValueError("every row needs at least one always-observed coordinate")
    else:
        eta = rng.random((n, p)) < pattern_prob
    bad = ~eta.any(axis=1)
    while bad.any():
        eta[bad] = rng.random((bad.sum(), p)) < pattern_prob
        bad = ~eta.any(axis=1)
    sd = x.std(axis=0)
    xs = (x - x.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    lin = np.where(eta, xs, 0.0) @ phi
    u = rng.random((n, p))
    candidates = ~eta
    reachable = candidates.mean()
    if target_rate > reachable:
        raise ValueError(f"target rate {target_rate} exceeds the fraction of maskable cells ({reachable:.3f})")

    def realized(offset):
        return (candidates & (u < expit(offset + lin)[:, None])).mean()

    lo, hi = -60.0, 60.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = realized(mid)
        if abs(r - target_rate) <= 0.1 * tol:
            break
        if r < target_rate:
            lo = mid
        else:
            hi = mid
    offset = mid
    if abs(realized(offset) - target_rate) > tol:
        raise ValueError("could not calibrate the missingness rate")
    mask = candidates & (u < expit(offset + lin)[:, None])
    return (mask, offset) if return_offset else mask


def generate(design_, rng=None):
    """Draw one dataset from ``design_``.

    Returns
    -------
    data : MaskedDataset
    x : ndarray
        Complete covariates before masking.
    mask : ndarray of bool
    """
    rng = np.random.default_rng(design_.seed) if rng is None else rng
    x = draw_covariates(design_, rng)
    y = (rng.random(design_.n) < expit(design(x) @ design_.beta_true)).astype(float)
    if design_.missing == "mcar":
        mask = mcar_mask(x.shape, design_.rate, rng)
    elif design_.rate == 0:
        mask = np.zeros(x.shape, dtype=bool)
    else:
        mask = mar_mask(x, design_.pattern_prob, design_.mar_weights, design_.rate, rng)
    return MaskedDataset(y=y, x=x, mask=mask), x, mask


@dataclass
class ScoreReport:
    auc: float
    brier: float
    logscore: float
    cost: float
    confusion: np.ndarray

    def as_dict(self):
        (tn, fp), (fn, tp) = self.confusion
        return {"auc": self.auc, "brier": self.brier, "logscore": self.logscore, "cost": self.cost,
                "tn": int(tn), "fp": int(fp), "fn": int(fn), "tp": int(tp)}


def auc_score(probs, labels_true):
    """Area under the ROC curve from the rank statistic, ties averaged."""
    probs = np.asarray(probs, dtype=float)
    y = np.asarray(labels_true).astype(bool)
    n1, n0 = y.sum(), (~y).sum()
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC is undefined when only one class is present")
    ranks = rankdata(probs)
    return float((ranks[y].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def score(probs, labels_true, threshold=0.5, w0=0.5, w1=0.5):
    """AUC, Brier score, logarithmic score and cost-weighted error.

    The cost is ``mean(w0 [y=1, yhat=0] + w1 [y=0, yhat=1])`` with
    ``yhat = [prob >= threshold]``; ``w0 + w1`` must equal 1. The log score is
    ``mean(y log p + (1 - y) log(1 - p))`` (higher is better) with ``p``
    clipped to ``[1e-12, 1 - 1e-12]``.
    """
    if w0 <= 0 or w1 <= 0 or abs(w0 + w1 - 1.0) > 1e-12:
        raise ValueError("weights must be positive and sum to one")
    probs = np.asarray(probs, dtype=float)
    y = np.asarray(labels_true).astype(int)
    if probs.shape != y.shape:
        raise ValueError("probs and labels differ in length")
    yhat = (probs >= threshold).astype(int)
    clipped = np.clip(probs, 1e-12, 1.0 - 1e-12)
    confusion = np.array([[np.sum((y == 0) & (yhat == 0)), np.sum((y == 0) & (yhat == 1))],
                          [np.sum((y == 1) & (yhat == 0)), np.sum((y == 1) & (yhat == 1))]])
    cost = (w0 * confusion[1, 0] + w1 * confusion[0, 1]) / y.size
    return ScoreReport(
        auc=auc_score(probs, y),
        brier=float(np.mean((probs - y) ** 2)),
        logscore=float(np.mean(y * np.log(clipped) + (1 - y) * np.log1p(-clipped))),
        cost=float(cost),
        confusion=confusion,
    )


def cost_threshold(w0, w1):
    """Bayes threshold for the cost-weighted error: predict 1 when ``p >= w1``."""
    if abs(w0 + w1 - 1.0) > 1e-12:
        raise ValueError("weights must sum to one")
    return w1


def _newton_with_ci(x, y, level):
    from .inference import wald_ci
    z = design(x)
    beta = fit_newton(z, y)
    se, lo, hi = wald_ci(logistic_information(beta, z), beta, level)
    return beta, se, lo, hi


@dataclass
class StudyResult:
    estimates: pd.DataFrame
    coverage: pd.DataFrame
    scores: pd.DataFrame
    failures: list

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.estimates.to_csv(out / "estimates.csv")
        self.coverage.to_csv(out / "coverage.csv", index=False)
        self.scores.to_csv(out / "scores.csv")
        return out


def _rep_seeds(seed, rep):
    ss = np.random.SeedSequence([seed, rep])
    data_ss, test_ss, fit_ss, pred_ss = ss.spawn(4)
    return (np.random.default_rng(data_ss), np.random.default_rng(test_ss),
            int(fit_ss.generate_state(1)[0]), np.random.default_rng(pred_ss))


def run_replication(design_, rep, method="saem", cfg=None, level=0.95, n_test=100, seed=None,
                    fim_samples=1000, pred_samples=1000, threshold=0.5):
    """One replication: estimates, intervals and test-set scores of ``method``."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    seed = design_.seed if seed is None else seed
    rng_data, rng_test, fit_seed, rng_pred = _rep_seeds(seed, rep)
    data, x_full, mask = generate(design_, rng_data)
    test, _, _ = generate(design_.replace(n=n_test), rng_test) if n_test else (None, None, None)
    y = data.y.astype(float)
    if method == "saem":
        cfg = (cfg or SaemConfig()).replace(seed=fit_seed)
        res = fit_model(data, cfg, fim_samples=fim_samples, level=level, with_loglik=False)
        beta, se, lo, hi = res.theta.beta, res.se, res.ci_low, res.ci_high
        prob = None if test is None else predict_proba(res.theta, test.x, test.mask, pred_samples, rng_pred)
    else:
        if method == "complete_case":
            keep = ~mask.any(axis=1)
            beta, se, lo, hi = _newton_with_ci(x_full[keep], y[keep], level)
        elif method == "mean_impute":
            beta, se, lo, hi = _newton_with_ci(mean_impute(data.x, mask), y, level)
        else:
            beta, se, lo, hi = _newton_with_ci(x_full, y, level)
        prob = None
        if test is not None:
            prob = predict_proba_imputed(beta, test.x, test.mask, column_means(data.x, mask))
    row = {}
    for j in range(design_.p + 1):
        row[f"beta{j}_est"] = beta[j]
        row[f"beta{j}_se"] = se[j]
        row[f"beta{j}_lo"] = lo[j]
        row[f"beta{j}_hi"] = hi[j]
    scores = None
    if prob is not None:
        try:
            scores = score(prob, test.y, threshold).as_dict()
        except ValueError:
            scores = {"auc": np.nan, "brier": float(np.mean((prob - test.y) ** 2))}
    return row, scores


def summarize(estimates, beta_true):
    """Coverage (%), mean interval length, bias and spread per coefficient."""
    rows = []
    for j, b in enumerate(beta_true):
        est = estimates[f"beta{j}_est"]
        lo, hi = estimates[f"beta{j}_lo"], estimates[f"beta{j}_hi"]
        rows.append({
            "coefficient": f"beta{j}",
            "true": b,
            "coverage": 100.0 * np.mean((lo <= b) & (b <= hi)),
            "mean_ci_length": float(np.mean(hi - lo)),
            "bias": float(np.mean(est) - b),
            "emp_sd": float(np.std(est, ddof=1)) if len(est) > 1 else np.nan,
            "mean_se": float(np.mean(estimates[f"beta{j}_se"])),
        })
    return pd.DataFrame(rows)


def replicate_study(design_, R, method="saem", cfg=None, level=0.95, n_test=100, seed=None,
                    out_dir=None, fim_samples=1000, pred_samples=1000, max_fail=0.1, progress=None):
    """Repeat :func:`run_replication` ``R`` times and aggregate.

    Replication ``r`` draws everything from streams seeded by ``(seed, r)``,
    so any subset of replications can be rerun on its own. Failures are
    recorded; more than ``max_fail * R`` of them abort the study.

    Returns
    -------
    StudyResult
        ``estimates`` (one row per replication, ``est/se/lo/hi`` per
        coefficient), ``coverage`` (one row per coefficient) and ``scores``
        (test-set metrics per replication).
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    seed = design_.seed if seed is None else seed
    est_rows, score_rows, reps, score_reps, failures = [], [], [], [], []
    for rep in range(R):
        try:
            row, sc = run_replication(design_, rep, method, cfg, level, n_test, seed,
                                      fim_samples, pred_samples)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            failures.append((rep, repr(exc)))
            logger.warning("replication %d failed: %s", rep, exc)
            if len(failures) > max_fail * R:
                raise RuntimeError(f"{len(failures)} of {R} replications failed; last: {exc}") from exc
            continue
        est_rows.append(row)
        reps.append(rep)
        if sc is not None:
            score_rows.append(sc)
            score_reps.append(rep)
        if progress is not None:
            progress(rep)
    estimates = pd.DataFrame(est_rows, index=pd.Index(reps, name="rep"))
    scores = pd.DataFrame(score_rows, index=pd.Index(score_reps, name="rep"))
    result = StudyResult(estimates=estimates, coverage=summarize(estimates, design_.beta_true),
                         scores=scores, failures=failures)
    if out_dir is not None:
        result.write(out_dir)
    return result
