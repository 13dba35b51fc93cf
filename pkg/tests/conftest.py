import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rcip import _kernels
from rcip.types import ScenarioRecord, StepContext

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(params=_kernels.available_backends())
def backend(request):
    """Run the test once per importable kernel backend."""
    previous = _kernels.backend_name()
    _kernels.use_backend(request.param)
    yield request.param
    _kernels.use_backend(previous)


def random_records(rng, count, steps=(1, 3), intents=(2, 5), actions=None, scale=2.0):
    """Records with random logits, intent->action maps and true intents."""
    out = []
    for i in range(count):
        T = int(rng.integers(steps[0], steps[1] + 1))
        st = []
        for _ in range(T):
            N = int(rng.integers(intents[0], intents[1] + 1))
            A = actions or N
            amap = tuple(int(a) for a in rng.integers(0, A, size=N))
            logits = tuple(float(x) for x in rng.normal(scale=scale, size=N))
            st.append(StepContext(logits, amap, int(rng.integers(N))))
        out.append(ScenarioRecord(f"r{i}", tuple(st)))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
