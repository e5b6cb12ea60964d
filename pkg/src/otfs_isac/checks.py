"""Quick oracle and invariant checks run by ``otfs-isac validate``.

Each check returns ``(name, passed, value, tolerance)``. They are light
versions of the test-suite oracles, sized to run in a few seconds.
"""

import numpy as np

from .channel import (
    ArrayGeometry,
    CommChannel,
    PathTuple,
    RadarScene,
    build_Hdd,
    max_range,
    max_velocity,
    synth_comm,
    synth_radar_compact,
    synth_radar_oracle,
)
from .comm import demodulate_dd, lmmse_covariance
from .design import approx_rate, build_G, lmmse_cov_from_pG, waterfill
from .frame import DDFrame, OtfsParams, WindowSet, build_waveform_matrix
from .radar import cfar_detect, matched_filter_output


def _random_setup(rng, N, M, n_tx, n_rx):
    prm = OtfsParams(N, M, 1e5, T_cp=0.9 * M / 1e5, n_tx=n_tx, n_rx=n_rx)
    frame = DDFrame.random(N, M, 64, rng)
    windows = WindowSet.search(N, M, n_tx, rng)
    return prm, frame, windows, build_waveform_matrix(frame, windows, prm)


def _random_paths(rng, prm, k):
    return [PathTuple(complex(rng.normal(), rng.normal()), float(rng.uniform(0, prm.T_cp)),
                      float(rng.uniform(-2, 2) / prm.T), float(rng.uniform(-1.4, 1.4)))
            for _ in range(k)]


def check_model_equivalence(rng, n=10):
    worst = 0.0
    for _ in range(n):
        prm, _, _, wf = _random_setup(rng, *rng.integers(2, 9, 2), *rng.integers(1, 5, 2))
        scene = RadarScene(_random_paths(rng, prm, 2))
        a = synth_radar_compact(wf, scene).Y
        b = synth_radar_oracle(wf, scene).Y
        worst = max(worst, np.linalg.norm(a - b) / np.linalg.norm(a))
    return "compact model vs continuous-time oracle", worst <= 1e-9, worst, 1e-9


def check_orthogonality(rng):
    worst = 0.0
    for N in (2, 4, 8):
        for M in (2, 4, 8):
            for n_tx in (2, 4, 8):
                _, frame, windows, wf = _random_setup(rng, N, M, n_tx, 1)
                R = wf.gram()
                P = np.array([np.linalg.norm(frame.X_dd * W) ** 2 for W in windows.W])
                off = np.max(np.abs(R - np.diag(np.diag(R))))
                worst = max(worst, off / P.max(), np.max(np.abs(np.diag(R).real - P)) / P.max())
    return "search-mode waveform orthogonality", worst <= 1e-10, worst, 1e-10


def check_virtual_array(rng, n=5):
    worst = 0.0
    for _ in range(n):
        prm, _, _, wf = _random_setup(rng, 8, 4, 3, 4)
        tgt = _random_paths(rng, prm, 1)[0]
        Y = synth_radar_compact(wf, RadarScene([tgt])).Y
        geo = ArrayGeometry.for_params(prm)
        Z = matched_filter_output(Y, wf, tgt.tau, tgt.nu, prm)
        ref = tgt.alpha * np.outer(geo.a_tx(tgt.theta), geo.a_rx(tgt.theta))
        worst = max(worst, np.linalg.norm(Z - ref) / np.linalg.norm(ref))
    return "virtual-array matched filter", worst <= 1e-9, worst, 1e-9


def check_ambiguity_table():
    isi = OtfsParams(64, 128, 480e3, 12.5e-6)
    ici = OtfsParams(64, 128, 30e3, 12.5e-6)
    got = np.array([max_range(isi, False), max_range(isi, True), max_velocity(isi, False),
                    max_velocity(ici, False)])
    want = np.array([312.5, 1875.0, 1285.7, 80.35])
    err = float(np.max(np.abs(got - want) / want))
    return "ambiguity limits vs reference table", err <= 1e-3, err, 1e-3


def check_hdd(rng):
    prm, frame, windows, wf = _random_setup(rng, 4, 4, 2, 1)
    ch = CommChannel(_random_paths(rng, prm, 3))
    y = synth_comm(wf, ch)
    H = build_Hdd(windows, ch, prm)
    err = np.linalg.norm(demodulate_dd(y, 4, 4).y_dd - H @ frame.vec()) / np.linalg.norm(y)
    return "DD channel matrix factorization", err <= 1e-9, err, 1e-9


def check_lmmse_equivalence(rng):
    prm = OtfsParams(4, 4, 1e5, T_cp=3.6e-5, n_tx=3)
    geo = ArrayGeometry.for_params(prm)
    ch = CommChannel(_random_paths(rng, prm, 3))
    beta = rng.normal(size=3) + 1j * rng.normal(size=3)
    beta /= np.linalg.norm(beta)
    p = rng.uniform(0, 2, prm.L)
    R1 = lmmse_cov_from_pG(p, build_G(beta, ch, prm, 0.7, geo))
    R2 = lmmse_covariance(build_Hdd(WindowSet.track(beta, p, 4, 4), ch, prm, geo), 0.7)
    err = float(np.max(np.abs(R1 - R2)))
    return "LMMSE covariance via G vs via H_DD", err <= 1e-9, err, 1e-9


def check_waterfill(rng):
    res = waterfill(np.array([1.0, 3.0]), 2.0)
    hand = float(np.max(np.abs(res.q - [2 / 3, 4 / 3])))
    g = rng.exponential(size=32)
    q = waterfill(g, 32.0).q
    best = approx_rate(q, g=g)
    worst = max(approx_rate(32 * rng.dirichlet(np.ones(32)), g=g) - best for _ in range(100))
    ok = hand <= 1e-12 and worst <= 0 and abs(q.sum() - 32) <= 1e-8
    return "water-filling optimality", ok, max(hand, worst), 1e-12


def check_cfar(rng):
    stat = rng.exponential(size=(300, 300))
    hits = cfar_detect(stat, 1e-2, 16, 2, mode="wrap", peak_only=False)
    n, p = stat.size, 1e-2
    dev = abs(len(hits) - n * p) / np.sqrt(n * p * (1 - p))
    return "CA-CFAR false-alarm calibration (sigmas)", dev <= 3.0, dev, 3.0


def run_checks(seed=0):
    rng = np.random.default_rng(seed)
    return [
        check_model_equivalence(rng),
        check_orthogonality(rng),
        check_virtual_array(rng),
        check_ambiguity_table(),
        check_hdd(rng),
        check_lmmse_equivalence(rng),
        check_waterfill(rng),
        check_cfar(rng),
    ]
