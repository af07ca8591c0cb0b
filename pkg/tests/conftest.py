import numpy as np
import pytest

from qpnf.grids import TorusGrid


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def grid_small():
    # nu = 2, modest band: fast enough for dense oracles
    return TorusGrid(nu=2, n_phi=8, xi_max=16)


@pytest.fixture
def grid_1d():
    return TorusGrid(nu=1, n_phi=8, xi_max=16)


def dft_oracle(samples):
    """Longhand O(n^2) DFT quadrature: c_k = (1/n) sum_j f(x_j) e^{-i k x_j}."""
    n = len(samples)
    j = np.arange(n)
    x = 2.0 * np.pi * j / n
    ks = np.rint(np.fft.fftfreq(n) * n).astype(int)
    return np.array([np.sum(samples * np.exp(-1j * k * x)) / n for k in ks])


def quantize_oracle(grid, symbol_samples_at_phi):
    """Longhand band matrix: M[xi', xi] = (1/n_x) sum_j a(x_j, xi) e^{-i(xi'-xi)x_j}.

    symbol_samples_at_phi has shape (n_x, n_band).
    """
    n_band = grid.n_band
    M = np.zeros((n_band, n_band), dtype=complex)
    for col, xi in enumerate(grid.xi):
        for row, xip in enumerate(grid.xi):
            k = xip - xi
            M[row, col] = np.sum(
                symbol_samples_at_phi[:, col] * np.exp(-1j * k * grid.x)
            ) / grid.n_x
    return M
