import numpy as np
import pytest

from mhsampler.kernels import nearest_neighbor_proposal

FIVE_WEIGHTS = np.array([1.0, 3.0, 2.0, 5.0, 4.0])


class FixedRng:
    """Stands in for a Generator: zero normals, fixed uniforms."""

    def __init__(self, u=0.5):
        self.u = u

    def standard_normal(self, shape=None):
        return np.zeros(shape) if shape is not None else 0.0

    def random(self, size=None):
        return self.u if size is None else np.full(size, self.u)


def nn_matrix(n):
    """Proposal matrix of the +/-1 walk on {0..n-1}; off-grid mass is left out (always rejected)."""
    q = np.zeros((n, n))
    for i in range(n):
        for j in (i - 1, i + 1):
            if 0 <= j < n:
                q[i, j] = 0.5
    return q


@pytest.fixture
def five_state():
    w = FIVE_WEIGHTS
    return np.log(w), w / w.sum(), nn_matrix(len(w))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
