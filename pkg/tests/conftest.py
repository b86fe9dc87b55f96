import numpy as np
import pytest

import alber_lab as al


@pytest.fixture
def grid8() -> al.SpectralGrid:
    return al.SpectralGrid(8)


@pytest.fixture
def grid16() -> al.SpectralGrid:
    return al.SpectralGrid(16)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_state(grid: al.SpectralGrid, rank: int, seed: int, band=None, decay=2.5):
    gen = np.random.default_rng(seed)
    return al.random_smooth_state(
        grid, rank=rank, band=grid.N if band is None else band, decay=decay, rng=gen
    )
