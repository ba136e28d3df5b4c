import itertools

import numpy as np
import pytest

from ngrec.metldpc import SparseParityMatrix


def _girth6_toy(m=20, n=40, wc=3, seed=2024):
    """m x n matrix, column weight wc, no two columns sharing two rows."""
    rng = np.random.default_rng(seed)
    while True:
        used = set()
        h = np.zeros((m, n), dtype=np.uint8)
        for j in range(n):
            for _ in range(1000):
                rows = tuple(sorted(rng.choice(m, wc, replace=False)))
                pairs = set(itertools.combinations(rows, 2))
                if not pairs & used:
                    break
            else:
                break
            used |= pairs
            h[list(rows), j] = 1
        else:
            if h.sum(axis=1).min() > 0:
                return h


@pytest.fixture(scope="session")
def toy_dense():
    return _girth6_toy()


@pytest.fixture(scope="session")
def toy_matrix(toy_dense):
    return SparseParityMatrix.from_dense(toy_dense)


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record
