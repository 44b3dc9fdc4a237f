import math

import numpy as np
import pytest

from massweight.count_table import MassTable

GOLDEN = (3 + math.sqrt(5)) / 2


def make_table(counts, masses, fvalues=None):
    if fvalues is None:
        fvalues = [0.0] * len(counts)
    keys = [bytes([i + 1]) for i in range(len(counts))]
    return MassTable.from_arrays(keys, counts, masses, fvalues)


def random_regular_table(rng, max_n=20, lo=1e-3, hi=1.0):
    """Random table with 2 <= M < N <= max_n and log-uniform masses."""
    n = int(rng.integers(3, max_n + 1))
    m = int(rng.integers(2, n))
    counts = np.ones(m, dtype=int)
    for j in rng.integers(0, m, size=n - m):
        counts[j] += 1
    masses = np.exp(rng.uniform(math.log(lo), math.log(hi), size=m))
    return make_table(counts, masses, rng.normal(size=m))


@pytest.fixture
def two_key():
    """Masses (1, 1), counts (2, 1), f = (1, 3)."""
    return make_table([2, 1], [1.0, 1.0], [1.0, 3.0])


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
