import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from slicevol.synth import SynthConfig, generate

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance outcomes, printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, line = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {line}")


@pytest.fixture(scope="session")
def small_dataset():
    return generate(SynthConfig(n_hearts=40, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
