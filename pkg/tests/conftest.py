import numpy as np
import pytest

from preadaptive_control import build_b747, default_config, run


@pytest.fixture(scope="session")
def b747():
    return build_b747()


@pytest.fixture(scope="session")
def rac1_result():
    """Scenario-1 run with preadaptation disabled (regular adaptive control)."""
    return run(default_config(1))


@pytest.fixture(scope="session")
def rac2_result():
    return run(default_config(2))


@pytest.fixture(scope="session")
def rac3_result():
    return run(default_config(3))


def windowed_cost(result, jumps, horizon):
    """Integral of |e| over each [jump, next jump) window, keyed by jump time."""
    t = result.trace["t"]
    e = np.abs(result.trace["e"])
    dt = t[1] - t[0]
    edges = list(jumps) + [horizon]
    return {
        a: float(np.sum(e[(t >= a) & (t < b)]) * dt)
        for a, b in zip(edges[:-1], edges[1:])
    }
