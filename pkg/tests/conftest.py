import numpy as np
import pytest

from decentsid.lti import homogeneous_chain, make_heat_benchmark, simulate


@pytest.fixture(scope="session")
def bench():
    return make_heat_benchmark()


@pytest.fixture(scope="session")
def chain10(bench):
    return homogeneous_chain(bench, 10)


def random_stable_chain(N, n, m, r, seed, rho=0.5):
    """Random chain model with spectral radius of the global A at most ``rho``."""
    from decentsid.lti import GlobalModel, LocalModel

    rng = np.random.default_rng(seed)
    locs = []
    for i in range(N):
        locs.append(LocalModel(
            rng.standard_normal((n, n)),
            rng.standard_normal((n, m)),
            rng.standard_normal((r, n)),
            rng.standard_normal((n, n)) if i > 0 else None,
            rng.standard_normal((n, n)) if i < N - 1 else None,
        ))
    model = GlobalModel(locs)
    scale = rho / max(np.abs(np.linalg.eigvals(model.A)).max(), 1e-12)
    return GlobalModel([
        LocalModel(l.A_ii * scale, l.B_i, l.C_i,
                   None if l.E_left is None else l.E_left * scale,
                   None if l.E_right is None else l.E_right * scale)
        for l in locs
    ])


@pytest.fixture
def noise_free_data(chain10):
    rng = np.random.default_rng(3)
    return simulate(chain10, rng.standard_normal((200, 10, 1)))


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion and assert on it."""
    def record(number, title, passed, detail):
        line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
