import numpy as np
import pytest

from saemlogit.data import MaskedDataset

ACCEPTANCE_LINES = {}


def record(criterion, passed, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[criterion])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def small_dataset(n=200, p=3, rate=0.15, seed=0, beta=None):
    """Correlated Gaussian covariates, logistic response, MCAR mask."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((p, p))
    sigma = a @ a.T / p + np.eye(p)
    mu = np.linspace(-1.0, 1.0, p)
    x = mu + rng.standard_normal((n, p)) @ np.linalg.cholesky(sigma).T
    beta = np.r_[0.3, np.linspace(1.0, -0.5, p)] if beta is None else np.asarray(beta)
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-(beta[0] + x @ beta[1:])))).astype(float)
    mask = rng.random((n, p)) < rate
    return MaskedDataset(y=y, x=x, mask=mask), x, beta, mu, sigma


@pytest.fixture
def dataset():
    return small_dataset()[0]
