import pytest

from stackmfg.config import ModelParams, SimConfig, TimeGrid
from stackmfg.limit_system import solve_limit

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def ref_params():
    return ModelParams()


@pytest.fixture(scope="session")
def grid1000():
    return TimeGrid(5.0, 1000)


@pytest.fixture(scope="session")
def ref_solution(ref_params, grid1000):
    return solve_limit(ref_params, grid1000)


@pytest.fixture(scope="session")
def small_config():
    return SimConfig(grid=TimeGrid(5.0, 200), n_paths=16, N_list=(10, 40), seed=7)


@pytest.fixture(scope="session")
def small_solution(ref_params, small_config):
    return solve_limit(ref_params, small_config.grid)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
