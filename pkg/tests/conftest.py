import numpy as np
import pytest
from hypothesis import strategies as st

from bvft.data import DataDistribution
from bvft.functions import Partition
from bvft.mdp import TabularMdp


def random_mdp(rng, S=3, A=2, gamma=0.9, sparse=False, r_max=1.0):
    P = rng.dirichlet(np.ones(S), size=(S, A))
    if sparse:
        P = P * (rng.random((S, A, S)) < 0.6)
        P[..., 0] += 1e-3
        P /= P.sum(axis=2, keepdims=True)
    R = rng.uniform(0, r_max, size=(S, A))
    d0 = rng.dirichlet(np.ones(S))
    return TabularMdp(P, R, gamma, d0, r_max)


def random_mu(rng, S, A, full=True):
    w = rng.dirichlet(np.ones(S * A)).reshape(S, A)
    if not full:
        w = w * (rng.random((S, A)) < 0.7)
        if w.sum() == 0:
            w[0, 0] = 1.0
        w /= w.sum()
    return DataDistribution(w)


def random_partition(rng, S, A, max_groups=None):
    k = max_groups or max(1, (S * A) // 2)
    return Partition(rng.integers(0, k, size=(S, A)))


def random_q(rng, S, A, v_max):
    return rng.uniform(0, v_max, size=(S, A))


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion, then assert it."""
    def record(cid, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {cid}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
