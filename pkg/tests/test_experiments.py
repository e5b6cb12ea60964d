import copy
from pathlib import Path

import numpy as np
import pytest

from otfs_isac.config import ScenarioConfig
from otfs_isac.experiments import (
    Gates,
    Table,
    associate,
    default_gates,
    draw_comm_channel,
    export_profiles,
    position_xy,
    run_sensing_experiment,
    run_tradeoff_experiment,
    simulate_trial,
    write_csv,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def desk():
    return ScenarioConfig.from_yaml(CONFIGS / "desk_sense.yaml")


@pytest.fixture(scope="module")
def tradeoff_cfg():
    cfg = ScenarioConfig.from_yaml(CONFIGS / "tradeoff.yaml")
    cfg.comm.random.draws = 2
    return cfg


# --- association -------------------------------------------------------------

GATES = Gates(1.0, 1.0, 1.0)


def test_associate_one_to_one():
    truth = [(10.0, 0.0, 0.0), (10.5, 0.0, 0.0)]
    hyps = [(10.4, 0.0, 0.0)]
    assert associate(truth, hyps, GATES) == [-1, 0]


def test_associate_respects_gates():
    assert associate([(0.0, 0.0, 0.0)], [(0.0, 0.0, 1.5)], GATES) == [-1]
    assert associate([(0.0, 0.0, 0.0)], [(0.0, 0.0, 0.9)], GATES) == [0]


def test_associate_empty():
    assert associate([(0.0, 0.0, 0.0)], [], GATES) == [-1]
    assert associate([], [(0.0, 0.0, 0.0)], GATES) == []


def test_associate_prefers_global_assignment():
    truth = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)]
    hyps = [(0.6, 0.0, 0.0), (1.4, 0.0, 0.0)]
    assert associate(truth, hyps, GATES) == [0, 1]


def test_default_gates_are_half_cells(desk):
    g = default_gates(desk)
    prm = desk.params()
    assert g.range_m == pytest.approx(299792458 / (4 * prm.bandwidth))
    assert g.velocity_mps == pytest.approx(prm.wavelength / (4 * prm.M * prm.T))
    assert g.angle_deg == pytest.approx(np.rad2deg(0.5 / 32))


def test_position_xy():
    assert np.allclose(position_xy(10.0, 90.0), (10.0, 0.0), atol=1e-12)
    assert np.allclose(position_xy(10.0, 0.0), (0.0, 10.0), atol=1e-12)


# --- output formatting -------------------------------------------------------

def test_write_csv_format(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, Table(["a", "b"], [[1, 0.1 + 0.2], [2, float("nan")]]))
    assert path.read_text() == "a,b\n1,0.3\n2,nan\n"


def test_export_profiles(tmp_path):
    files = export_profiles({"x": Table(["c"], [[1]])}, tmp_path / "sub")
    assert files["x"].read_text() == "c\n1\n"


# --- trials and channels -----------------------------------------------------

def test_simulate_trial_is_seeded(desk):
    a = simulate_trial(desk, 0, 3)
    b = simulate_trial(desk, 0, 3)
    c = simulate_trial(desk, 0, 4)
    assert np.array_equal(a[1].Y, b[1].Y)
    assert not np.array_equal(a[1].Y, c[1].Y)


def test_comm_draw_lmr_and_power(tradeoff_cfg):
    spec = tradeoff_cfg.comm.random
    for j in (-10.0, 0.0, 10.0):
        ch = draw_comm_channel(tradeoff_cfg, j, 0)
        assert len(ch) == spec.n_paths
        assert 10 * np.log10(ch.lmr()) == pytest.approx(j)
        total = sum(abs(p.alpha) ** 2 for p in ch.paths)
        assert total == pytest.approx(10 ** (spec.total_snr_db / 10) * tradeoff_cfg.sigma2)
        assert all(p.tau <= spec.max_delay for p in ch.paths)


def test_comm_draws_are_paired_across_lmr(tradeoff_cfg):
    a = draw_comm_channel(tradeoff_cfg, -10.0, 1)
    b = draw_comm_channel(tradeoff_cfg, 10.0, 1)
    assert [p.tau for p in a.paths] == [p.tau for p in b.paths]
    assert [np.angle(p.alpha) for p in a.paths] == pytest.approx([np.angle(p.alpha)
                                                                 for p in b.paths])


# --- determinism -------------------------------------------------------------

def _tables_text(tables, tmp_path, tag):
    files = export_profiles(tables, tmp_path / tag)
    return {k: v.read_bytes() for k, v in files.items()}


def test_sensing_deterministic_across_workers(desk, tmp_path):
    cfg = copy.deepcopy(desk)
    cfg.experiment.trials = 2
    r1 = run_sensing_experiment(cfg, workers=1)
    r2 = run_sensing_experiment(cfg, workers=2)
    t1 = _tables_text({"s": r1.summary, "t": r1.trials}, tmp_path, "a")
    t2 = _tables_text({"s": r2.summary, "t": r2.trials}, tmp_path, "b")
    assert t1 == t2


def test_tradeoff_deterministic_across_workers(tradeoff_cfg, tmp_path):
    kw = dict(rho_grid=[0.0, 1.0], lmr_list=[0.0])
    t1 = _tables_text(run_tradeoff_experiment(tradeoff_cfg, workers=1, **kw), tmp_path, "a")
    t2 = _tables_text(run_tradeoff_experiment(tradeoff_cfg, workers=2, **kw), tmp_path, "b")
    assert t1 == t2


def test_tradeoff_endpoints(tradeoff_cfg):
    tables = run_tradeoff_experiment(tradeoff_cfg, rho_grid=[0.0, 1.0], lmr_list=[0.0])
    mean = tables["tradeoff_mean"].rows
    assert mean[0][2] <= mean[1][2]
    assert mean[0][4] >= mean[1][4]
