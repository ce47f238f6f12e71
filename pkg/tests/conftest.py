import numpy as np
import pytest

from nlfreq.program import ProgramBuilder
from nlfreq import dsl


def build_program(exprs, n_state, params=None):
    """Program with outputs ``exprs`` over ``t`` and states ``x1..xn``."""
    b = ProgramBuilder(n_state)
    env = dict(params or {})
    env["t"] = b.time_slot
    for i in range(n_state):
        env[f"x{i + 1}"] = b.state_slot(i)
    for k, e in enumerate(exprs):
        b.output(k, dsl.as_expression(e, set(env)), env)
    return b.build()


@pytest.fixture
def van_der_pol():
    return build_program(["x2", "mu*(1 - x1^2)*x2 - x1"], 2, {"mu": 2.0})


@pytest.fixture
def compiled():
    return pytest.importorskip("nlfreq._kernels")


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion."""
    def record(key, ok, detail):
        _ACCEPTANCE[key] = f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (int(k.rstrip("abc")), k)):
        terminalreporter.write_line(_ACCEPTANCE[key])
