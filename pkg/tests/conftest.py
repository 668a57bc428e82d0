import numpy as np
import pytest

from dagsbm.graph import Dag
from dagsbm.likelihood import PriorConfig
from dagsbm.sampler import TuningConfig
from dagsbm.state import ChainState, OrderingState


def set_partitions(n):
    """All set partitions of range(n) as restricted-growth label lists."""
    def rec(i, z, k):
        if i == n:
            yield list(z)
            return
        for c in range(k + 1):
            z.append(c)
            yield from rec(i + 1, z, max(k, c + 1))
            z.pop()
    yield from rec(0, [], 0)


def random_dag(n, rng, p=0.4, max_count=1):
    """Random DAG: thin the upper triangle of a random permutation."""
    sig = rng.permutation(n)
    edges, counts = [], []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.append((sig[i], sig[j]))
                counts.append(int(rng.integers(1, max_count + 1)))
    return Dag(n, edges, counts=counts or None), sig


def make_state(g, sigma, z, xi=None, priors=None, tuning=None, mode="infinite", **kw):
    xi = np.ones(g.n) if xi is None else xi
    kw.setdefault("a", 1.0)
    kw.setdefault("b", 1.0)
    kw.setdefault("regime", 1 if mode == "finite" else 0)
    st = ChainState(g, OrderingState.from_sigma(sigma), z, xi, **kw)
    st.priors = priors or PriorConfig()
    st.tuning = tuning or TuningConfig()
    st.mode = mode
    st.pseudo = None
    return st


def batch_se(x, batches=100):
    """Standard error of the mean of a correlated series by batch means."""
    x = np.asarray(x, dtype=float)
    m = len(x) // batches
    bm = x[: m * batches].reshape(batches, m).mean(axis=1)
    return bm.std(ddof=1) / np.sqrt(batches)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
