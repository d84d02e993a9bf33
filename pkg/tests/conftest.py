import numpy as np
import pytest

from sdmeq import channel as ch
from sdmeq import discretize as dz

SYMBOL_RATE = 30e9


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pulse():
    return dz.PulseSpec(rolloff=0.1, symbol_rate=SYMBOL_RATE)


def random_link(n_modes, mdl_db, K=50, dmd=35e-12):
    return ch.LinkSpec(n_modes=n_modes, K=K, section_length=10.0, sigma_mdl=mdl_db,
                       sigma_dmd=dmd)


def random_channel(seed, n_modes=4, mdl_db=0.7, K=50, s=2, energy_keep=1.0 - 1e-6,
                   n_bins=1000):
    """Whitened single-link response and its discrete channel."""
    p = dz.PulseSpec(rolloff=0.1, symbol_rate=SYMBOL_RATE)
    grid = ch.FreqGrid.centered(s * SYMBOL_RATE, n_bins)
    path = ch.PathSpec(links=[random_link(n_modes, mdl_db, K)])
    H, _ = ch.path_response(path, np.random.default_rng(seed), grid)
    return H, dz.discretize(H, p, s, energy_keep=energy_keep)
