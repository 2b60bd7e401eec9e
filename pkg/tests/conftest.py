import sys
from pathlib import Path

import numpy as np
import pytest

from schedaware import ActiveLink, RadioParams, Scenario, SignalField, grid_topology, make_scenario

sys.path.insert(0, str(Path(__file__).parent))

# Hand-sized radio: T_RX = 1.0, W = 0.1, T_SINR = 10, carrier sense at 0.9.
TOY_RADIO = RadioParams(tx_power=1.0, rx_sensitivity=1.0, sinr_threshold=10.0, noise_floor=0.1,
                        path_loss_exponent=4.0)


def symmetric(n, entries, background=0.001):
    th = np.full((n, n), background)
    np.fill_diagonal(th, 0.0)
    for (a, b), v in entries.items():
        th[a, b] = th[b, a] = v
    return th


def h3_theta():
    """Three links A=0->1, B=2->3, C=4->5.

    A and B sources sense each other; C is concurrent with both but its
    source reaches A's receiver at 0.5 (sub-sensitivity, SINR-breaking).
    """
    return symmetric(6, {(0, 1): 5.0, (2, 3): 5.0, (4, 5): 5.0,
                         (0, 2): 2.0,
                         (4, 1): 0.5, (5, 1): 0.05})


H3_LINKS = [ActiveLink(0, 1), ActiveLink(2, 3), ActiveLink(4, 5)]


@pytest.fixture
def h3():
    return Scenario(None, TOY_RADIO, SignalField(h3_theta())), list(H3_LINKS)


def hidden_theta():
    """Two links whose sources cannot hear each other but reach the other receiver."""
    return symmetric(4, {(0, 1): 5.0, (2, 3): 5.0, (2, 1): 0.8, (0, 3): 0.8}, background=0.01)


@pytest.fixture
def hidden():
    return Scenario(None, TOY_RADIO, SignalField(hidden_theta())), [ActiveLink(0, 1), ActiveLink(2, 3)]


def isolated_scenario(k=4):
    """k links whose sources all carrier-sense each other."""
    n = 2 * k
    entries = {(2 * i, 2 * i + 1): 5.0 for i in range(k)}
    for i in range(k):
        for j in range(i + 1, k):
            entries[(2 * i, 2 * j)] = 2.0
    return Scenario(None, TOY_RADIO, SignalField(symmetric(n, entries))), [ActiveLink(2 * i, 2 * i + 1) for i in range(k)]


def single_link_scenario():
    th = np.zeros((2, 2))
    th[0, 1] = th[1, 0] = 5.0
    return Scenario(None, TOY_RADIO, SignalField(th)), [ActiveLink(0, 1)]


@pytest.fixture(scope="session")
def grid6():
    return make_scenario(grid_topology(6, 200.0))
