# %% [markdown]
# Predicting for patients with incomplete records
#
# A test row with missing covariates gets P(y = 1) by averaging the logistic
# curve over the fitted conditional law of what is missing. The alternative is
# to plug in column means. Then the scores, and a threshold for a setting
# where a false negative costs five times a false positive.

# %%
import numpy as np

from saemlogit import SaemConfig, fit_model, generate, predict_proba, preset, score
from saemlogit.data import column_means, mean_impute
from saemlogit.logistic import design, fit_newton
from saemlogit.selection import predict_proba_imputed
from saemlogit.simulation import cost_threshold

truth = preset("default", n=1000, rate=0.1)
train, _, _ = generate(truth, np.random.default_rng(11))
test, _, _ = generate(truth.replace(n=2000, rate=0.3), np.random.default_rng(12))

res = fit_model(train, SaemConfig(seed=5), fim_samples=200)
p_marg = predict_proba(res.theta, test.x, test.mask, S=1000, rng=np.random.default_rng(0))

means = column_means(train.x, train.mask)
beta_imp = fit_newton(design(mean_impute(train.x, train.mask)), train.y)
p_imp = predict_proba_imputed(beta_imp, test.x, test.mask, means)

# %% Scores on the test set, 30% missing cells
for name, p in (("marginalized SAEM", p_marg), ("mean imputation", p_imp)):
    s = score(p, test.y)
    print(f"{name:<18} AUC {s.auc:.4f}  Brier {s.brier:.4f}  log score {s.logscore:.4f}")

# %% Asymmetric costs: w0 / w1 = 5 puts the Bayes threshold at w1 = 1/6
w0, w1 = 5 / 6, 1 / 6
t = cost_threshold(w0, w1)
for thr in (0.5, t):
    s = score(p_marg, test.y, threshold=thr, w0=w0, w1=w1)
    (tn, fp), (fn, tp) = s.confusion
    print(f"threshold {thr:.3f}: cost {s.cost:.4f}  false negatives {fn}  false positives {fp}")
