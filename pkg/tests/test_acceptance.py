"""Acceptance criteria 1-11 at their stated tolerances.

The desk-scale studies (2, 3, 6, 8) take most of an hour on one core; they are
marked ``slow`` and can be skipped with ``-m "not slow"``. One PASS/FAIL line
per criterion is printed in the terminal summary.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import record
from oracles import bivariate_instance, fd_hessian, quadrature_loglik
from saemlogit.data import write_csv
from saemlogit.inference import fit_model, louis_fim, obs_loglik
from saemlogit.logistic import design, fit_newton, logistic_information
from saemlogit.saem import SaemConfig, saem_fit
from saemlogit.selection import exhaustive_select, predict_proba
from saemlogit.simulation import auc_score, generate, preset, replicate_study, score

SEED = 20261019


def test_c01_complete_data_reduction():
    d, x, _ = generate(preset("default", rate=0.0), np.random.default_rng(SEED))
    t0 = time.perf_counter()
    theta, _ = saem_fit(d, SaemConfig(seed=1))
    fim = louis_fim(theta, d, S=1000, rng=np.random.default_rng(1))
    elapsed = time.perf_counter() - t0
    ref = fit_newton(design(x), d.y)
    info = logistic_information(theta.beta, design(x))
    d_beta = np.max(np.abs(theta.beta - ref))
    rel = np.max(np.abs(fim - info)) / np.max(np.abs(info))
    ok = d_beta < 1e-6 and rel < 1e-8 and elapsed < 5
    record(1, ok, f"|dbeta|_inf={d_beta:.2e} (<1e-6), FIM rel={rel:.2e} (<1e-8), {elapsed:.2f}s (<5s)")
    assert ok


@pytest.fixture(scope="module")
def mcar_studies():
    """SAEM and complete-case replications on identical data (10% MCAR, n = 1000)."""
    design_ = preset("default", n=1000, rate=0.1)
    marks = {}
    t0 = time.perf_counter()

    def tick(rep):
        if rep == 199:
            marks["first_200"] = time.perf_counter() - t0

    saem = replicate_study(design_, 400, method="saem", n_test=0, seed=SEED, progress=tick)
    cc = replicate_study(design_, 400, method="complete_case", n_test=0, seed=SEED)
    return design_, saem, cc, marks


@pytest.mark.slow
def test_c02_unbiasedness(mcar_studies):
    design_, saem, _, marks = mcar_studies
    est = saem.estimates.loc[saem.estimates.index < 200]
    bias = np.array([est[f"beta{j}_est"].mean() for j in range(6)]) - design_.beta_true
    ok = len(est) == 200 and np.all(np.abs(bias) < 0.05) and abs(bias[3]) < 0.03
    runtime = marks.get("first_200", np.nan)
    record(2, ok, f"max|bias|={np.max(np.abs(bias)):.4f} (<0.05), bias3={bias[3]:+.4f} (<0.03), "
                  f"R={len(est)}, {runtime / 60:.1f} min (target <30)")
    assert ok


@pytest.mark.slow
def test_c03_coverage(mcar_studies):
    _, saem, cc, _ = mcar_studies
    cov = saem.coverage["coverage"].to_numpy()
    len_saem = saem.coverage["mean_ci_length"].to_numpy()
    len_cc = cc.coverage["mean_ci_length"].to_numpy()
    ok = len(saem.estimates) == 400 and np.all((cov >= 92.5) & (cov <= 97.5)) and np.all(len_saem < len_cc)
    record(3, ok, f"coverage={np.round(cov, 1).tolist()} in [92.5, 97.5]; "
                  f"CI length SAEM/CC={np.round(len_saem / len_cc, 3).tolist()} (<1)")
    assert ok


@pytest.fixture(scope="module")
def bivariate():
    d, _ = bivariate_instance()
    theta, _ = saem_fit(d, SaemConfig(seed=2))
    return d, theta


def test_c04_loglik_oracle(bivariate):
    d, theta = bivariate
    t0 = time.perf_counter()
    est = obs_loglik(theta, d, S=100_000, rng=np.random.default_rng(4))
    elapsed = time.perf_counter() - t0
    ref = quadrature_loglik(theta.beta, theta, d, nodes=64)
    rel = abs(est - ref) / abs(ref)
    ok = rel < 1e-3 and elapsed < 60
    record(4, ok, f"IS={est:.5f} quad={ref:.5f} rel={rel:.2e} (<1e-3), {elapsed:.2f}s (<60s)")
    assert ok


def test_c05_fim_oracle(bivariate):
    d, theta = bivariate
    fim = louis_fim(theta, d, S=1000, rng=np.random.default_rng(5))
    hess = -fd_hessian(lambda b: quadrature_loglik(b, theta, d, nodes=64), theta.beta)
    rel = np.linalg.norm(fim - hess) / np.linalg.norm(hess)
    ok = rel < 0.03
    record(5, ok, f"Frobenius rel={rel:.4f} (<0.03)")
    assert ok


@pytest.mark.slow
def test_c06_model_selection():
    design_ = preset("selection", n=1000, rate=0.1)
    truth = set(np.flatnonzero(design_.beta_true[1:]))
    hits = under = 0
    R = 100
    for rep in range(R):
        rng = np.random.default_rng([SEED, 6, rep])
        d, _, _ = generate(design_, rng)
        model, _ = exhaustive_select(d, SaemConfig(seed=rep), refit=False)
        chosen = set(model.active)
        hits += chosen == truth
        under += not truth <= chosen
    ok = hits >= 0.85 * R and under <= 0.10 * R
    record(6, ok, f"true model {hits}/{R} (>=85%), underfit {under}/{R} (<=10%)")
    assert ok


def test_c07_training_auc():
    aucs = []
    for s in range(20):
        d, _, _ = generate(preset("default", rate=0.0), np.random.default_rng([SEED, 7, s]))
        res = fit_model(d, SaemConfig(seed=s), with_fim=False, with_loglik=False)
        aucs.append(auc_score(predict_proba(res.theta, d.x, d.mask), d.y))
    aucs = np.array(aucs)
    ok = np.all((aucs >= 0.87) & (aucs <= 0.92))
    record(7, ok, f"AUC range [{aucs.min():.4f}, {aucs.max():.4f}] within [0.87, 0.92], mean {aucs.mean():.4f}")
    assert ok


@pytest.mark.slow
def test_c08_prediction_with_missing_test_rows():
    design_ = preset("default", n=1000, rate=0.1)
    kw = dict(n_test=100, seed=SEED + 8)
    saem = replicate_study(design_, 50, method="saem", fim_samples=100, **kw).scores
    imp = replicate_study(design_, 50, method="mean_impute", **kw).scores
    ok = len(saem) == len(imp) == 50 and saem["brier"].mean() <= imp["brier"].mean() \
        and saem["auc"].mean() >= imp["auc"].mean()
    record(8, ok, f"Brier SAEM {saem['brier'].mean():.4f} <= impMean {imp['brier'].mean():.4f}; "
                  f"AUC SAEM {saem['auc'].mean():.4f} >= impMean {imp['auc'].mean():.4f}")
    assert ok


def test_c09_cost_metric():
    rep = score(np.array([0.0, 0.0, 1.0, 1.0]), np.array([1, 0, 1, 0]), 0.5, 5 / 6, 1 / 6)
    exact = rep.cost == 0.25
    rng = np.random.default_rng(9)
    p = rng.random(500)
    y = (rng.random(500) < p).astype(int)
    grid = np.linspace(0.01, 0.99, 99)
    conf = np.array([score(p, y, t, 5 / 6, 1 / 6).confusion for t in grid])
    monotone = np.all(np.diff(conf[:, 1, 0]) >= 0) and np.all(np.diff(conf[:, 0, 1]) <= 0)
    ok = exact and monotone
    record(9, ok, f"hand instance cost={rep.cost!r} (==0.25); FN non-decreasing and FP non-increasing "
                  f"in threshold: {monotone}")
    assert ok


def _cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "saemlogit.cli", *map(str, args)], cwd=cwd,
                          capture_output=True, text=True, check=True).stdout


def test_c10_cli_determinism(tmp_path):
    d, _, _ = generate(preset("default", n=300), np.random.default_rng(10))
    write_csv(d, tmp_path / "train.csv")
    t, _, _ = generate(preset("default", n=50), np.random.default_rng(11))
    write_csv(t, tmp_path / "test.csv")
    small = ["--iters", "120", "--k1", "40"]
    commands = {
        "fit": (["fit", "--input", "train.csv", "--seed", "42", *small, "--out", "{o}/fit.json",
                 "--trace", "{o}/trace.csv"], ["fit.json", "trace.csv"]),
        "loglik": (["loglik", "--input", "train.csv", "--fit", "ref/fit.json", "--seed", "7",
                    "--per-row", "{o}/rows.csv"], ["rows.csv"]),
        "select": (["select", "--input", "train.csv", "--method", "forward", "--seed", "1", *small,
                    "--selection-iters", "60", "--out", "{o}/model.json"], ["model.json"]),
        "predict": (["predict", "--input", "test.csv", "--fit", "ref/fit.json", "--seed", "3",
                     "--out", "{o}/preds.csv"], ["preds.csv"]),
        "simulate": (["simulate", "--design", "default", "--n", "200", "--reps", "2", "--seed", "1", *small,
                      "--out", "{o}/study"], ["study/estimates.csv", "study/coverage.csv", "study/scores.csv"]),
    }
    (tmp_path / "ref").mkdir()
    _cli(["fit", "--input", "train.csv", "--seed", "5", *small, "--out", "ref/fit.json"], tmp_path)
    same = {}
    for name, (args, outputs) in commands.items():
        runs = []
        for k in range(2):
            o = tmp_path / f"{name}{k}"
            o.mkdir()
            stdout = _cli([a.format(o=o) for a in args], tmp_path).replace(str(o), "{o}")
            runs.append([stdout] + [(o / f).read_bytes() for f in outputs])
        same[name] = runs[0] == runs[1]
    ok = all(same.values())
    record(10, ok, "bit-identical reruns: " + ", ".join(f"{k}={v}" for k, v in same.items()))
    assert ok


def test_c11_performance():
    d, _, _ = generate(preset("default", n=1000, rate=0.1), np.random.default_rng(11))
    cfg = SaemConfig(n_iter=500, mh_steps=10, seed=11)
    t0 = time.perf_counter()
    saem_fit(d, cfg)
    elapsed = time.perf_counter() - t0
    ok = elapsed < 10
    record(11, ok, f"SAEM n=1000 p=5 500 iterations mh-steps 10: {elapsed:.2f}s (<10s)")
    assert ok
