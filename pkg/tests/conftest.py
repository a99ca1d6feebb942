import numpy as np
import pytest

from qlphase.estimate import OptimizerConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fast_cfg():
    return OptimizerConfig(max_iters=800, warmup_iters=300, restarts=1)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


ACCEPTANCE = []


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE.append((number, title, bool(passed), detail))
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {number:>2}. {title}: {detail}")
