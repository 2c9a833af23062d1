import sys

import numpy as np
import pytest
from hypothesis import settings

from nccerf import Dataset

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_dataset(n=200, seed=0, covariates=0, with_u=True):
    r = np.random.default_rng(seed)
    u = r.normal(size=n)
    x = u + r.normal(size=n)
    z = u + r.normal(size=n)
    w = -2 * u + r.normal(size=n)
    L = r.normal(size=(n, covariates)) if covariates else None
    y = 1 + 2 * x + 3 * u + r.normal(size=n)
    if covariates:
        y = y + L.sum(axis=1)
    return Dataset(y=y, x=x, z=z, w=w, covariates=L,
                   covariate_names=tuple(f"L{j}" for j in range(covariates)),
                   u_hidden=u if with_u else None)


@pytest.fixture
def small_data():
    return make_dataset()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
