import numpy as np
import pytest


def random_corpus(rng, max_sessions, max_items, max_len=6):
    n = int(rng.integers(1, max_sessions + 1))
    return [list(map(int, rng.integers(0, max_items, size=int(rng.integers(1, max_len + 1))))) for _ in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
