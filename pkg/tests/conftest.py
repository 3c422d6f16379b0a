import numpy as np
import pytest

from parallel_ngrc.harness import get_preset, load_or_generate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def recording_cache(request):
    """Simulated recordings persist across runs in pytest's cache directory."""
    return request.config.cache.mkdir("ngrc_recordings")


@pytest.fixture(scope="session")
def small_recording(recording_cache):
    return load_or_generate(get_preset("small"), 60.0, recording_cache)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
