import functools

import numpy as np
import pytest

from harmap import fixtures
from harmap.decompositions import alpha_split

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def metric_fixture(name, resolution=None):
    builders = {
        "flat_t2": lambda: fixtures.flat(2, resolution),
        "flat_t3": lambda: fixtures.flat(3, resolution),
        "conformal_t2": lambda: fixtures.conformal_t2(resolution or 32),
        "bump_t3": lambda: fixtures.bump_t3(resolution or 24),
    }
    return builders[name]()


@functools.lru_cache(maxsize=None)
def harmonic_directions(name, seed, count=3, kmax=2):
    """Harmonic parts of seeded random fields, scaled to unit max-abs."""
    g = metric_fixture(name)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        phi = fixtures.random_field(g.grid, rng, 2, kmax=kmax)
        ph = alpha_split(phi, g).residual_part
        out.append(ph / np.abs(ph).max())
    return tuple(out)


@pytest.fixture(scope="session")
def flat2():
    return metric_fixture("flat_t2")


@pytest.fixture(scope="session")
def flat3():
    return metric_fixture("flat_t3")


@pytest.fixture(scope="session")
def conf2():
    return metric_fixture("conformal_t2")


@pytest.fixture(scope="session")
def bump3():
    return metric_fixture("bump_t3")


@pytest.fixture
def rng():
    return np.random.default_rng(1)


def record_acceptance(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
