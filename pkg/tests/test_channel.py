import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otfs_isac.channel import (
    ArrayGeometry,
    CommChannel,
    PathTuple,
    RadarScene,
    build_Hdd,
    delay_doppler_shift,
    freq_steering,
    max_range,
    max_velocity,
    scene_from_physical,
    synth_comm,
    synth_comm_oracle,
    synth_radar_compact,
    synth_radar_oracle,
    temporal_steering,
    ula_steering,
)
from otfs_isac.comm import demodulate_dd
from otfs_isac.frame import DDFrame, OtfsParams, WindowSet, build_waveform_matrix

from conftest import make_setup


def random_paths(rng, prm, k):
    return [PathTuple(complex(rng.normal(), rng.normal()), float(rng.uniform(0, prm.T_cp)),
                      float(rng.uniform(-2, 2) / prm.T), float(rng.uniform(-1.4, 1.4)))
            for _ in range(k)]


# --- steering ----------------------------------------------------------------

def test_zero_delay_and_doppler_give_identity(rng):
    prm = OtfsParams(4, 3, 1e5, 1e-5)
    assert np.allclose(freq_steering(0.0, prm), 1.0)
    assert np.allclose(temporal_steering(0.0, prm), 1.0)
    x = rng.normal(size=(12, 2)) + 0j
    assert np.allclose(delay_doppler_shift(x, 0.0, 0.0, prm), x, atol=1e-14)


def test_integer_delay_is_cyclic_shift(rng):
    prm = OtfsParams(4, 3, 1e5, 1e-5)
    x = rng.normal(size=12) + 1j * rng.normal(size=12)
    out = delay_doppler_shift(x, 2 * prm.sample_period, 0.0, prm)
    assert np.allclose(out, np.roll(x, 2), atol=1e-12)


def test_doppler_is_phase_ramp(rng):
    prm = OtfsParams(4, 3, 1e5, 1e-5)
    x = rng.normal(size=12) + 0j
    nu = 1234.0
    out = delay_doppler_shift(x, 0.0, nu, prm)
    assert np.allclose(out, np.exp(2j * np.pi * nu * prm.sample_times()) * x, atol=1e-12)


def test_ula_broadside_and_endfire():
    assert np.allclose(ula_steering(0.0, 4, 0.5), 1.0)
    assert np.allclose(ula_steering(np.pi / 2, 3, 0.5), [1, -1, 1])
    with pytest.raises(ValueError):
        ula_steering(2.0, 3, 0.5)


def test_default_geometry_forms_filled_virtual_array():
    geo = ArrayGeometry(2, 4)
    th = 0.3
    virtual = np.kron(geo.a_rx(th), geo.a_tx(th))
    assert np.allclose(virtual, ula_steering(th, 8, 0.5), atol=1e-12)


# --- scene types -------------------------------------------------------------

def test_path_validation():
    with pytest.raises(ValueError):
        PathTuple(1.0, -1e-9, 0.0, 0.0)
    with pytest.raises(ValueError):
        PathTuple(1.0, 0.0, 0.0, 1.7)


def test_lmr():
    ch = CommChannel([PathTuple(2.0, 0, 0, 0), PathTuple(1.0, 0, 0, 0), PathTuple(1.0, 0, 0, 0)])
    assert ch.lmr() == pytest.approx(2.0)
    assert CommChannel([PathTuple(1.0, 0, 0, 0)]).lmr() == np.inf


def test_scene_from_physical_power():
    prm = OtfsParams(8, 4, 1e5, 1e-5)
    scene = scene_from_physical(prm, [10.0, 20.0], [1.0, -1.0], [0.0, 10.0], [0.0, 10.0], 2.0)
    assert abs(scene.targets[1].alpha) ** 2 == pytest.approx(20.0)
    assert scene.targets[0].tau == pytest.approx(2 * 10.0 / 299792458)


# --- synthesis routes --------------------------------------------------------

def test_empty_scene_is_pure_noise(small_setup):
    prm, _, _, wf = small_setup
    assert np.array_equal(synth_radar_compact(wf, RadarScene([])).Y, np.zeros((prm.L, 3)))
    a = synth_radar_compact(wf, RadarScene([]), sigma2=1.0, seed=5).Y
    b = synth_radar_oracle(wf, RadarScene([]), sigma2=1.0, seed=5).Y
    assert np.array_equal(a, b)


def test_delay_beyond_cp_rejected(small_setup):
    prm, _, _, wf = small_setup
    with pytest.raises(ValueError):
        synth_radar_compact(wf, RadarScene([PathTuple(1.0, 1.01 * prm.T_cp, 0.0, 0.0)]))


def test_noise_variance(small_setup):
    _, _, _, wf = small_setup
    Y = synth_radar_compact(wf, RadarScene([]), sigma2=2.0, seed=1).Y
    assert np.mean(np.abs(Y) ** 2) == pytest.approx(2.0, rel=0.2)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.integers(1, 4), st.integers(1, 4),
       st.integers(0, 2 ** 31 - 1))
def test_compact_matches_oracle(N, M, n_tx, n_rx, seed):
    prm, _, _, wf = make_setup(N, M, n_tx, n_rx, seed)
    rng = np.random.default_rng(seed + 1)
    scene = RadarScene(random_paths(rng, prm, 3))
    a = synth_radar_compact(wf, scene).Y
    b = synth_radar_oracle(wf, scene).Y
    assert np.linalg.norm(a - b) <= 1e-9 * np.linalg.norm(a)


def test_rect_oracle_on_grid(small_setup):
    prm, _, _, wf = small_setup
    scene = RadarScene([PathTuple(1 - 0.5j, 3 * prm.sample_period, 2.5e3, 0.2)])
    a = synth_radar_compact(wf, scene).Y
    b = synth_radar_oracle(wf, scene, pulse="rect").Y
    assert np.allclose(a, b, atol=1e-12)


def test_comm_compact_matches_oracle(small_setup, rng):
    prm, _, _, wf = small_setup
    ch = CommChannel(random_paths(rng, prm, 4))
    assert np.allclose(synth_comm(wf, ch), synth_comm_oracle(wf, ch), atol=1e-10)


def test_hdd_factorization(rng):
    prm, frame, windows, wf = make_setup(4, 4, 2, 1, seed=3)
    ch = CommChannel(random_paths(rng, prm, 3))
    y = synth_comm(wf, ch)
    H = build_Hdd(windows, ch, prm)
    assert np.allclose(demodulate_dd(y, 4, 4).y_dd, H @ frame.vec(), atol=1e-10)


def test_hdd_single_path_no_shift_is_diagonal():
    prm = OtfsParams(4, 2, 1e5, 1e-5)
    ch = CommChannel([PathTuple(2.0, 0.0, 0.0, 0.0)])
    H = build_Hdd(WindowSet.full(4, 2), ch, prm)
    assert np.allclose(H, 2.0 * np.eye(8), atol=1e-12)


# --- ambiguity limits --------------------------------------------------------

def test_ambiguity_reference_table():
    isi = OtfsParams(64, 128, 480e3, 12.5e-6)
    ici = OtfsParams(64, 128, 30e3, 12.5e-6)
    assert max_range(isi, with_isi=False) == pytest.approx(312.5, rel=1e-3)
    assert max_range(isi, with_isi=True) == pytest.approx(1875.0, rel=1e-3)
    assert max_velocity(isi, with_ici=False) == pytest.approx(1285.7, rel=1e-3)
    assert max_velocity(ici, with_ici=False) == pytest.approx(80.35, rel=1e-3)
    assert max_range(ici, with_isi=False, cap_by_cp=False) == pytest.approx(5000.0, rel=1e-3)
    assert max_range(ici, with_isi=True) == pytest.approx(1875.0, rel=1e-3)


def test_ambiguity_gain_factors():
    prm = OtfsParams(16, 8, 480e3, 1.0)
    assert max_range(prm, True) / max_range(prm, False) == pytest.approx(8)
    assert max_velocity(prm, True) / max_velocity(prm, False) == pytest.approx(16)
