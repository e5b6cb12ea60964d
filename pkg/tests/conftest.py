import numpy as np
import pytest

from otfs_isac.frame import DDFrame, OtfsParams, WindowSet, build_waveform_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_setup(N=8, M=4, n_tx=2, n_rx=3, seed=0, delta_f=1e5, cp_fraction=0.9):
    """Small random search-mode setup: params, frame, windows, waveform."""
    rng = np.random.default_rng(seed)
    prm = OtfsParams(N, M, delta_f, T_cp=cp_fraction * M / delta_f, n_tx=n_tx, n_rx=n_rx)
    frame = DDFrame.random(N, M, 64, rng)
    windows = WindowSet.search(N, M, n_tx, rng)
    return prm, frame, windows, build_waveform_matrix(frame, windows, prm)


@pytest.fixture
def small_setup():
    return make_setup()
