import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from otfs_isac.frame import (
    DDFrame,
    OtfsModulator,
    OtfsParams,
    WindowMode,
    WindowSet,
    apply_windows,
    build_waveform_matrix,
    heisenberg_time_signal,
    isfft,
    qam_constellation,
    sfft,
    unvec,
    vec,
)


def dft(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


# --- parameters and symbols ---------------------------------------------------

def test_params_derive_symbol_time():
    p = OtfsParams(4, 2, 15e3, 5e-6)
    assert p.T == pytest.approx(1 / 15e3, rel=1e-15)
    assert p.L == 8


def test_params_reject_inconsistent_T():
    with pytest.raises(ValueError):
        OtfsParams(4, 2, 15e3, 5e-6, T=1.01 / 15e3)


@pytest.mark.parametrize("kw", [{"N": 0}, {"M": 0}, {"delta_f": -1.0}, {"T_cp": 0.0},
                                {"n_tx": 0}])
def test_params_reject_invalid(kw):
    base = dict(N=4, M=2, delta_f=15e3, T_cp=5e-6)
    base.update(kw)
    with pytest.raises((ValueError, TypeError)):
        OtfsParams(**base)


def test_qam_unit_power():
    for order in (4, 16, 64):
        c = qam_constellation(order)
        assert c.size == order
        assert np.mean(np.abs(c) ** 2) == pytest.approx(1.0, abs=1e-14)


def test_vec_is_column_stacking():
    X = np.arange(6).reshape(2, 3)
    assert list(vec(X)) == [0, 3, 1, 4, 2, 5]
    assert np.array_equal(unvec(vec(X), 2, 3), X)


# --- windows -----------------------------------------------------------------

def test_identity_window_leaves_frame_unchanged(rng):
    frame = DDFrame.random(4, 4, seed=rng)
    out = apply_windows(frame, WindowSet.full(4, 4))
    assert np.array_equal(out[0], frame.X_dd)


def test_checkerboard_masks():
    W = np.zeros((2, 2, 2))
    W[0] = [[1, 0], [0, 1]]
    W[1] = [[0, 1], [1, 0]]
    ws = WindowSet("search", W)
    out = apply_windows(DDFrame(np.arange(1, 5).reshape(2, 2)), ws)
    assert all(np.count_nonzero(o) == 2 for o in out)
    assert not np.any(out[0] * out[1])


def test_search_masks_sum_to_frame(rng):
    frame = DDFrame.random(4, 4, seed=rng)
    out = apply_windows(frame, WindowSet.search(4, 4, 3, seed=rng))
    assert np.allclose(out.sum(axis=0), frame.X_dd, atol=0)


def test_search_partition_is_balanced(rng):
    ws = WindowSet.search(5, 3, 4, seed=rng)
    counts = ws.W.real.sum(axis=(1, 2))
    assert set(counts) <= {3.0, 4.0}
    assert counts.sum() == 15


def test_invalid_search_masks_rejected():
    with pytest.raises(ValueError):
        WindowSet("search", np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        WindowSet("search", 0.5 * np.ones((1, 2, 2)))


def test_track_windows_structure():
    beta = np.array([1.0, 1j])
    p = np.arange(6.0)
    ws = WindowSet.track(beta, p, 3, 2)
    assert ws.mode is WindowMode.TRACK
    assert np.allclose(ws.matrix(), np.outer(p, beta))
    assert ws.total_power() == pytest.approx(2 * np.sum(p ** 2))


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        apply_windows(DDFrame(np.ones((3, 2))), WindowSet.full(2, 3))


# --- transforms --------------------------------------------------------------

def test_isfft_matches_dense_dft(rng):
    X = rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))
    assert np.allclose(isfft(X), dft(4) @ X @ dft(3).conj().T, atol=1e-13)


def test_isfft_of_zero():
    assert np.array_equal(isfft(np.zeros((3, 2))), np.zeros((3, 2)))


def test_isfft_identity_2x2_hand_expansion():
    # F_2 = [[1, 1], [1, -1]] / sqrt(2) is real symmetric, so F_2 I F_2^H = I
    F2 = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    assert np.allclose(isfft(np.eye(2)), F2 @ F2, atol=1e-15)
    assert np.allclose(isfft(np.eye(2)), np.eye(2), atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2 ** 31 - 1))
def test_isfft_unitary_round_trip(N, M, seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(N, M)) + 1j * r.normal(size=(N, M))
    Y = isfft(X)
    assert np.linalg.norm(Y) == pytest.approx(np.linalg.norm(X), rel=1e-12)
    assert np.allclose(sfft(Y), X, rtol=0, atol=1e-12 * np.abs(X).max())


def test_heisenberg_dc_subcarrier():
    X = np.zeros((4, 3), dtype=complex)
    X[0, 0] = 1.0
    s = heisenberg_time_signal(X)
    assert np.allclose(s[:4], 0.5)
    assert np.allclose(s[4:], 0.0)


def test_heisenberg_zero_pulse(rng):
    X = rng.normal(size=(4, 3)) + 0j
    assert np.array_equal(heisenberg_time_signal(X, np.zeros(4)), np.zeros(12))


def test_heisenberg_matches_dd_factorization(rng):
    X = rng.normal(size=(6, 4)) + 1j * rng.normal(size=(6, 4))
    s = heisenberg_time_signal(isfft(X))
    assert np.allclose(s, vec(X @ dft(4).conj().T), atol=1e-12)


def test_pulse_must_be_diagonal():
    with pytest.raises(ValueError):
        heisenberg_time_signal(np.ones((2, 2)), np.ones((2, 2)))


# --- waveform matrix ---------------------------------------------------------

def test_single_antenna_waveform_is_plain_otfs(rng):
    prm = OtfsParams(4, 4, 1e5, 1e-5)
    frame = DDFrame.random(4, 4, seed=rng)
    wf = build_waveform_matrix(frame, WindowSet.full(4, 4), prm)
    assert np.allclose(wf.S[:, 0], vec(frame.X_dd @ dft(4).conj().T), atol=1e-12)


@pytest.mark.parametrize("N", [2, 4, 8])
@pytest.mark.parametrize("M", [2, 4, 8])
@pytest.mark.parametrize("n_tx", [2, 4, 8])
def test_search_mode_gram_is_diagonal(N, M, n_tx):
    r = np.random.default_rng(N * 100 + M * 10 + n_tx)
    prm = OtfsParams(N, M, 1e5, 1e-5, n_tx=n_tx)
    frame = DDFrame.random(N, M, 64, r)
    ws = WindowSet.search(N, M, n_tx, r)
    R = build_waveform_matrix(frame, ws, prm).gram()
    P = np.array([np.linalg.norm(frame.X_dd * W) ** 2 for W in ws.W])
    scale = P.max()
    assert np.max(np.abs(R - np.diag(np.diag(R)))) <= 1e-10 * scale
    assert np.allclose(np.diag(R).real, P, rtol=0, atol=1e-10 * scale)


def test_track_mode_single_steering(rng):
    prm = OtfsParams(4, 2, 1e5, 1e-5, n_tx=3)
    ws = WindowSet.track([1.0, 0.0, 0.0], np.ones(8), 4, 2)
    wf = build_waveform_matrix(DDFrame.random(4, 2, seed=rng), ws, prm)
    assert np.linalg.norm(wf.S[:, 0]) > 0
    assert np.all(wf.S[:, 1:] == 0)


def test_continuous_rect_reproduces_samples(small_setup):
    prm, _, _, wf = small_setup
    s = wf.continuous(prm.sample_times(), pulse="rect")
    assert np.allclose(s, wf.S, atol=1e-12)


def test_continuous_bandlimited_reproduces_samples(small_setup):
    prm, _, _, wf = small_setup
    s = wf.continuous(prm.sample_times(), pulse="bandlimited")
    assert np.allclose(s, wf.S, atol=1e-12)


@pytest.mark.parametrize("pulse", ["rect", "bandlimited"])
def test_cyclic_prefix_branch(small_setup, pulse):
    prm, _, _, wf = small_setup
    t = -np.arange(1, 4) * prm.sample_period
    frame_len = prm.M * prm.T
    a = wf.continuous(t, pulse=pulse, cp=True)
    b = wf.continuous(t + frame_len, pulse=pulse, cp=False)
    assert np.allclose(a, b, atol=1e-12)


def test_continuous_rejects_out_of_range(small_setup):
    prm, _, _, wf = small_setup
    with pytest.raises(ValueError):
        wf.continuous([-2 * prm.T_cp])
    with pytest.raises(ValueError):
        wf.continuous([prm.M * prm.T * 1.5])


# --- transformer API ---------------------------------------------------------

def test_modulator_round_trip_and_params(rng):
    mod = OtfsModulator(N=4, M=8).fit()
    X = rng.normal(size=(3, 4, 8)) + 1j * rng.normal(size=(3, 4, 8))
    s = mod.transform(X)
    assert s.shape == (3, 32)
    assert np.allclose(mod.inverse_transform(s), X, atol=1e-12)
    assert clone(mod).get_params() == {"N": 4, "M": 8}


def test_modulator_shape_check():
    with pytest.raises(ValueError):
        OtfsModulator(N=4, M=4).fit().transform(np.ones((1, 4, 5)))
