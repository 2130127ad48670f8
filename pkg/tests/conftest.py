import numpy as np
import pytest

from condlab import Grid, Region, fourier_modes


@pytest.fixture(scope="session")
def interval():
    return Region(1, "interval", 1.0)


@pytest.fixture(scope="session")
def grid1k(interval):
    return Grid.covering(interval, 1024)


@pytest.fixture(scope="session")
def grid2k(interval):
    return Grid.covering(interval, 2048)


@pytest.fixture(scope="session")
def grid8k(interval):
    return Grid.covering(interval, 8192)


@pytest.fixture(scope="session")
def basis64(interval, grid2k):
    return fourier_modes(interval, grid2k, 64)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def random_wave(rng, grid, region, modes=None):
    """Random normalized wave function supported on `region`."""
    from condlab import WaveFunction

    mask = grid.mask(region)
    vals = np.zeros(grid.shape, dtype=complex)
    vals[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
    return WaveFunction(grid, vals, region).normalized()
