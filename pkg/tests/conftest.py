import numpy as np
import pytest

from xmod_align import SyntheticConfig, gen_synthetic
from xmod_align.linalg import normalize_rows


# one "CRITERION n [...]: PASS/FAIL/SKIP" entry per acceptance criterion,
# filled by the acceptance suite's `report` decorator
CRITERION_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(CRITERION_RESULTS,
                       key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_dataset():
    return gen_synthetic(SyntheticConfig())


@pytest.fixture
def toy_instance(rng):
    """5-way 1-shot: unit features, unit text rows, slot labels."""
    f = normalize_rows(rng.standard_normal((5, 16)))
    t = normalize_rows(rng.standard_normal((5, 16)))
    labels = np.arange(5)
    return f, t, labels
