import numpy as np
import pytest

from tined.autodiff import Tape
from tined.graph import Graph


def numeric_grad(f, value, h=1e-5):
    """Central differences of scalar ``f`` w.r.t. every entry of ``value`` (modified in place)."""
    g = np.zeros_like(value)
    it = np.nditer(value, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = value[i]
        value[i] = old + h
        fp = f()
        value[i] = old - h
        fm = f()
        value[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def assert_grad_close(analytic, numeric, rtol=1e-4, atol=1e-6):
    err = np.abs(analytic - numeric)
    bound = rtol * np.maximum(np.abs(analytic), np.abs(numeric)) + atol
    assert np.all(err <= bound), f"max excess {np.max(err - bound):.3e}"


def check_gradients(build, params, h=1e-5):
    """``build(tape)`` returns a scalar node; compares Param.grad with central differences."""
    tape = Tape()
    loss = build(tape)
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    def f():
        return float(build(Tape()).value[0, 0])

    for p, a in zip(params, analytic):
        assert_grad_close(a / p.multiplier if p.multiplier else a, numeric_grad(f, p.value, h))


def random_graph(n, p, rng):
    mask = np.triu(rng.random((n, n)) < p, 1)
    u, v = np.nonzero(mask)
    return Graph.from_edges(n, np.stack([u, v], axis=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
