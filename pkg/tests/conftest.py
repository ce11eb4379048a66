import itertools
import os
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"

# filled by test_acceptance, printed at the end of the run
ACCEPTANCE_RESULTS: dict = {}


def random_cloud(rng, p, n, spread=True):
    """Gaussian cloud with a random linear distortion and offset."""
    X = rng.standard_normal((n, p))
    if spread:
        X = X @ rng.normal(size=(p, p)) + rng.normal(scale=3.0, size=p)
    return X


def monomial_oracle(X, exps):
    """v_d(x) by direct powers, one column per exponent."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.stack([np.prod(X ** np.asarray(e, dtype=float), axis=1) for e in exps], axis=1)


def brute_exponents(p, d):
    """All alpha in N^p with |alpha| <= d by exhaustive product enumeration."""
    return [a for a in itertools.product(range(d + 1), repeat=p) if sum(a) <= d]


def kdd_raw_path():
    """Path of the original raw KDD Cup 99 log, or None when it is not available."""
    env = os.environ.get("CHRISTOFFEL_KDD_RAW")
    candidates = [Path(env)] if env else []
    candidates += [DATA / "kddcup.data", DATA / "kddcup.data.gz"]
    for c in candidates:
        if c.is_file():
            return c
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def square_points():
    return np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split(".")[0].rstrip("ab"))):
        status, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{status}] criterion {key}: {detail}")
