import numpy as np
import pytest

from empnca.nca import N_PARAMS, Genome


def make_genome(seed, id=0):
    rng = np.random.default_rng(seed)
    return Genome.from_parameters(rng.uniform(-1, 1, N_PARAMS), id=id)


def biased_genome(bias, id=0):
    return Genome(np.zeros((5, 10)), bias, id=id)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# acceptance criteria report ---------------------------------------------------

ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
