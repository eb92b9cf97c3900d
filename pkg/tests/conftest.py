import numpy as np
import pytest

from scsr_snn.backprop import SurrogateConfig
from scsr_snn.network import NetworkSpec, init_weights


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def smooth():
    return SurrogateConfig("smooth-gate", 4.0)


def scsr_spec(sizes=(6, 8, 8, 8, 3), input_mode="analog-current", **lif):
    from scsr_snn.network import LifConfig
    return NetworkSpec(list(sizes), [True] * (len(sizes) - 2), [(1, 3)],
                       lif=LifConfig(**lif), input_mode=input_mode)


@pytest.fixture
def small_scsr():
    spec = scsr_spec()
    return spec, init_weights(spec, 7)


ACCEPTANCE_LINES: list[str] = []


def record(name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
