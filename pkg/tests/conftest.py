import logging

import numpy as np
import pytest

from arqsched.channel import ChannelModel, random_channels


@pytest.fixture(autouse=True)
def _quiet_k_floor():
    logging.getLogger("arqsched.policies").setLevel(logging.ERROR)
    yield


@pytest.fixture
def gilbert():
    return ChannelModel(0.2, 0.8)


@pytest.fixture
def hetero10():
    return random_channels(10, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_GATE: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line, echoed in the terminal summary."""
    def _report(name: str, ok: bool, detail: str) -> None:
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        _GATE.append(line)
        print(line)
    return _report


def pytest_terminal_summary(terminalreporter):
    if _GATE:
        terminalreporter.section("acceptance gate")
        for line in _GATE:
            terminalreporter.write_line(line)
