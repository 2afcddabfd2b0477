import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from turnpike.experiment import ExperimentSpec, run_experiment  # noqa: E402


@pytest.fixture(scope="session")
def lq_sweep():
    spec = ExperimentSpec(model="lq-tracking", horizons=(10, 20, 40),
                          epsilons=(1e-1, 1e-2, 1e-3), audit_epsilon=1e-2, grad_tol=1e-9)
    return run_experiment(spec, write=False)


@pytest.fixture(scope="session")
def heat_sweep():
    """heat2d on the 30x10 grid, dt = 0.1, T in {5, 10, 20}."""
    spec = ExperimentSpec(model="heat2d", horizons=(5, 10, 20), epsilons=(0.1, 0.05, 0.01),
                          audit_epsilon=0.05, grad_tol=1e-8)
    return run_experiment(spec, write=False)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(acceptance_log.LINES):
            terminalreporter.write_line(line)
