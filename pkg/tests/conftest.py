import numpy as np
import pytest

from gwcrp.survival import HazardPartition, RegionData

ACCEPTANCE_LINES = []


def random_region(rng, n=None, p=None, J=None, max_n=50, max_p=4, max_J=4):
    """Small random region with events spread over every piece."""
    n = n or int(rng.integers(8, max_n + 1))
    p = int(rng.integers(0, max_p + 1)) if p is None else p
    J = J or int(rng.integers(1, max_J + 1))
    cuts = tuple(np.sort(rng.uniform(0.3, 3.0, J - 1))) if J > 1 else ()
    while J > 1 and np.min(np.diff((0.0,) + cuts)) < 0.05:
        cuts = tuple(np.sort(rng.uniform(0.3, 3.0, J - 1)))
    part = HazardPartition(cuts)
    X = rng.normal(size=(n, p))
    t = rng.exponential(1.5, n)
    ev = rng.random(n) < 0.7
    return RegionData(t, ev, X, part), part


def brute_loglik(time, event, X, beta, lam, cuts):
    """Term-by-term evaluation of the piecewise-exponential log-likelihood."""
    a = [0.0] + list(cuts) + [np.inf]
    J = len(a) - 1
    total = 0.0
    for t, d, x in zip(time, event, X):
        lp = float(np.dot(x, beta))
        for j in range(1, J + 1):
            if d and a[j - 1] <= t < a[j]:
                total += np.log(lam[j - 1])
            if t < a[j - 1]:
                delta = 0.0
            elif t < a[j]:
                delta = t - a[j - 1]
            else:
                delta = a[j] - a[j - 1]
            total -= lam[j - 1] * delta * np.exp(lp)
        if d:
            total += lp
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
