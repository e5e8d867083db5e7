import time

import pytest

from slipsim.model import ModelConfig, run_simulation

RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[RESULTS] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion's outcome, then assert it."""
    results = request.config.stash[RESULTS]

    def record(number, name, ok, detail=""):
        results[number] = (name, bool(ok), detail)
        assert ok, f"criterion {number} ({name}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        name, ok, detail = results[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {name} | {detail}")


class TimedRun:
    def __init__(self, config):
        t0 = time.perf_counter()
        self.run = run_simulation(config)
        self.seconds = time.perf_counter() - t0


# Seeds for the long runs are fixed here once and never tuned to outcomes.
PRIMARY_SEED = 0
SECOND_SEED = 1


@pytest.fixture(scope="session")
def primary_run():
    return TimedRun(ModelConfig(seed=PRIMARY_SEED))


@pytest.fixture(scope="session")
def second_run():
    return TimedRun(ModelConfig(seed=SECOND_SEED))
