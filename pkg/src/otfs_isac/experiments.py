"""Monte Carlo drivers, detection-to-truth association and result export.

Every random draw is seeded from integer indices only, e.g.
``default_rng([master_seed, sweep_point, trial])``, so results do not depend
on the number of workers or on scheduling order.
"""

import csv
import hashlib
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import linear_sum_assignment

from . import __version__
from .channel import (
    SPEED_OF_LIGHT,
    CommChannel,
    PathTuple,
    RadarScene,
    synth_radar_compact,
)
from .config import ScenarioConfig
from .design import ChannelGram, apply_HT_V, beampattern, run_algorithm2
from .frame import DDFrame, WindowSet, build_waveform_matrix, time_to_dd
from .radar import (
    DDGrid,
    FFTBenchmarkDetector,
    GLRTDetector,
    angle_spectrum,
    default_theta_axis,
    fft_benchmark_images,
    glrt_map,
)

METHODS = ("glrt", "fft")


# --------------------------------------------------------------------------
# tables
# --------------------------------------------------------------------------

@dataclass
class Table:
    """A named CSV table: header plus rows of scalars."""

    header: List[str]
    rows: List[list] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        j = self.header.index(name)
        return [r[j] for r in self.rows]


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if np.isnan(x):
            return "nan"
        return f"{x:.10g}"
    return str(x)


def write_csv(path, table: Table):
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(table.header)
            for row in table.rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def export_profiles(artifacts: Dict[str, Table], out_dir) -> Dict[str, Path]:
    """Write each table as ``<name>.csv`` in ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return {name: write_csv(out_dir / f"{name}.csv", tab) for name, tab in artifacts.items()}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if not np.isfinite(x) else round(x, 12)
    return x


def write_manifest(out_dir, command, cfg: ScenarioConfig, summary: dict, files: Dict[str, Path]):
    import numpy
    import scipy
    import sklearn

    manifest = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "seed": cfg.experiment.seed,
        "trials": cfg.experiment.trials,
        "versions": {
            "otfs_isac": __version__,
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__,
        },
        "config": cfg.to_dict(),
        "summary": summary,
        "outputs": {name: {"file": p.name, "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
                    for name, p in sorted(files.items())},
    }
    path = Path(out_dir) / "manifest.json"
    try:
        path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


# --------------------------------------------------------------------------
# association
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Gates:
    range_m: float
    velocity_mps: float
    angle_deg: float


def default_gates(cfg: ScenarioConfig) -> Gates:
    """Half a resolution cell in range, velocity and angle unless configured."""
    prm = cfg.params()
    a = cfg.association
    r = a.range_gate_m if a.range_gate_m is not None else SPEED_OF_LIGHT / (4 * prm.bandwidth)
    v = (a.velocity_gate_mps if a.velocity_gate_mps is not None
         else prm.wavelength / (4 * prm.M * prm.T))
    n_virtual = prm.n_tx * prm.n_rx
    th = (a.angle_gate_deg if a.angle_gate_deg is not None
          else float(np.rad2deg(0.5 / (n_virtual * cfg.array.tx_spacing))))
    return Gates(float(r), float(v), float(th))


def associate(truth: Sequence[tuple], hyps: Sequence[tuple], gates: Gates):
    """One-to-one gated assignment of hypotheses to truth.

    Both inputs hold ``(range_m, velocity_mps, angle_deg)`` tuples. Returns a
    list with, per truth entry, the index of its hypothesis or ``-1``.
    """
    out = [-1] * len(truth)
    if not truth or not hyps:
        return out
    T = np.asarray(truth, dtype=float)
    H = np.asarray(hyps, dtype=float)
    scale = np.array([gates.range_m, gates.velocity_mps, gates.angle_deg])
    d = np.abs(T[:, None, :] - H[None, :, :]) / scale
    feasible = np.all(d <= 1.0, axis=2)
    cost = np.where(feasible, np.sqrt(np.sum(d ** 2, axis=2)), 1e6)
    rows, cols = linear_sum_assignment(cost)
    for r, c in zip(rows, cols):
        if feasible[r, c]:
            out[r] = int(c)
    return out


def position_xy(range_m, angle_deg):
    th = np.deg2rad(angle_deg)
    return np.array([range_m * np.sin(th), range_m * np.cos(th)])


# --------------------------------------------------------------------------
# sensing Monte Carlo
# --------------------------------------------------------------------------

def make_detectors(cfg: ScenarioConfig):
    d = cfg.detector
    common = dict(p_fa=d.p_fa, os_tau=d.os_tau, os_nu=d.os_nu, training=d.training, guard=d.guard,
                  cfar_mode=d.cfar_mode, angle_step_deg=d.angle_step_deg,
                  angle_training=d.angle_training, angle_guard=d.angle_guard,
                  max_omp_iter=d.max_omp_iter, tx_spacing=cfg.array.tx_spacing,
                  rx_spacing=cfg.array.rx_spacing)
    glrt = GLRTDetector(tau_max=d.tau_max, nu_max=d.nu_max, **common)
    fft = FFTBenchmarkDetector(variant=d.fft_variant, **common)
    return glrt, fft


def _trial_windows(cfg: ScenarioConfig, rng):
    prm = cfg.params()
    if cfg.experiment.mode == "search":
        return WindowSet.search(prm.N, prm.M, prm.n_tx, rng)
    ref = cfg.radar.targets[cfg.radar.reference_target]
    beta = np.conj(cfg.geometry().a_tx(np.deg2rad(ref.angle_deg))) / np.sqrt(prm.n_tx)
    return WindowSet.track(beta, np.ones(prm.L), prm.N, prm.M)


def _truth_tuples(cfg: ScenarioConfig):
    return [(t.range_m, t.velocity_mps, t.angle_deg) for t in cfg.radar.targets]


def simulate_trial(cfg: ScenarioConfig, point: int, trial: int, snr_db=None):
    """Synthesize one noisy observation; returns ``(waveform, observation, scene)``."""
    prm = cfg.params()
    rng = np.random.default_rng([cfg.experiment.seed, point, trial])
    frame = DDFrame.random(prm.N, prm.M, cfg.otfs.qam_order, rng)
    windows = _trial_windows(cfg, rng)
    wf = build_waveform_matrix(frame, windows, prm)
    K = len(cfg.radar.targets)
    phases = rng.uniform(0, 2 * np.pi, K) if cfg.radar.random_phases else None
    scene = cfg.radar_scene(snr_db, phases)
    obs = synth_radar_compact(wf, scene, cfg.sigma2, rng, cfg.geometry())
    return wf, obs, scene


def _hyp_tuples(report, prm):
    return [(float(prm.delay_to_range(tau)), float(prm.doppler_to_velocity(nu)),
             float(np.rad2deg(th))) for tau, nu, th, _ in report.targets()]


def _sensing_trial(cfg: ScenarioConfig, point: int, trial: int, snr_db):
    prm = cfg.params()
    wf, obs, _ = simulate_trial(cfg, point, trial, snr_db)
    glrt, fft = make_detectors(cfg)
    reports = {"glrt": glrt.fit(wf).predict(obs), "fft": fft.fit(wf).predict(obs)}
    truth = _truth_tuples(cfg)
    gates = default_gates(cfg)
    rows = []
    for method in METHODS:
        hyps = _hyp_tuples(reports[method], prm)
        match = associate(truth, hyps, gates)
        n_assoc = sum(m >= 0 for m in match)
        for k, m in enumerate(match):
            if m >= 0:
                h = hyps[m]
                err = (h[0] - truth[k][0], h[1] - truth[k][1], h[2] - truth[k][2],
                       float(np.linalg.norm(position_xy(h[0], h[2])
                                            - position_xy(truth[k][0], truth[k][2]))))
            else:
                err = (np.nan,) * 4
            rows.append([point, trial, method, k, int(m >= 0), *err, len(hyps), n_assoc,
                         len(reports[method].detections)])
    return rows


TRIAL_HEADER = ["point", "trial", "method", "target", "detected", "range_err_m",
                "velocity_err_mps", "angle_err_deg", "position_err_m", "n_hypotheses",
                "n_associated", "n_dd_detections"]


@dataclass
class MetricsRecord:
    summary: Table
    trials: Table
    gates: Gates

    def pd(self, method, point=0) -> float:
        for row in self.summary.rows:
            if row[0] == point and row[2] == method:
                return row[4]
        raise KeyError((method, point))


def _summarize(cfg: ScenarioConfig, trial_rows, points):
    K = len(cfg.radar.targets)
    ref = cfg.radar.reference_target
    header = ["point", "ref_snr_db", "method", "trials", "pd_ref", "rmse_ref_m",
              "mean_targets_detected", "frac_all_detected", "max_targets_detected",
              "mean_unassociated"] + [f"pd_target{k}" for k in range(K)]
    tab = Table(header)
    arr = {}
    for r in trial_rows:
        arr.setdefault((r[0], r[2]), []).append(r)
    for p_idx, snr in enumerate(points):
        ref_snr = cfg.radar.targets[ref].snr_db if snr is None else snr
        for method in METHODS:
            rows = arr.get((p_idx, method), [])
            n_trials = len({r[1] for r in rows})
            det = np.zeros((n_trials, K))
            trial_ids = sorted({r[1] for r in rows})
            pos = {t: i for i, t in enumerate(trial_ids)}
            ref_err = []
            unassoc = np.zeros(n_trials)
            for r in rows:
                det[pos[r[1]], r[3]] = r[4]
                unassoc[pos[r[1]]] = r[9] - r[10]
                if r[3] == ref and r[4]:
                    ref_err.append(r[8])
            counts = det.sum(axis=1)
            rmse = float(np.sqrt(np.mean(np.square(ref_err)))) if ref_err else np.nan
            tab.rows.append([p_idx, ref_snr, method, n_trials, float(det[:, ref].mean()), rmse,
                             float(counts.mean()), float(np.mean(counts == K)),
                             int(counts.max()), float(unassoc.mean())]
                            + [float(x) for x in det.mean(axis=0)])
    return tab


def run_sensing_experiment(cfg: ScenarioConfig, workers: Optional[int] = None) -> MetricsRecord:
    """Pd / RMSE Monte Carlo for the GLRT detector and the FFT benchmark."""
    if not cfg.radar.targets:
        raise ValueError("sensing experiment needs at least one target")
    points = list(cfg.radar.snr_sweep_db) or [None]
    jobs = [(p, t, s) for p, s in enumerate(points) for t in range(cfg.experiment.trials)]
    n_jobs = workers or cfg.experiment.workers
    if n_jobs == 1:
        results = [_sensing_trial(cfg, p, t, s) for p, t, s in jobs]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(_sensing_trial)(cfg, p, t, s) for p, t, s in jobs)
    trial_rows = [row for res in results for row in res]
    trial_rows.sort(key=lambda r: (r[0], r[1], METHODS.index(r[2]), r[3]))
    return MetricsRecord(_summarize(cfg, trial_rows, points), Table(TRIAL_HEADER, trial_rows),
                         default_gates(cfg))


# --------------------------------------------------------------------------
# trade-off experiment
# --------------------------------------------------------------------------

def draw_comm_channel(cfg: ScenarioConfig, lmr_db, draw: int) -> CommChannel:
    """Random multipath channel with a prescribed LOS-to-multipath ratio.

    The total power is ``10^(SNR/10) sigma2``; the LOS path gets the fraction
    ``J/(1+J)`` and the rest is split at random over the NLOS paths. The
    random draw depends only on ``(seed, draw)``, so channels for different
    ``J`` differ only in the LOS/NLOS power split.
    """
    spec = cfg.comm.random
    rng = np.random.default_rng([cfg.experiment.seed, 7, draw])
    K = spec.n_paths
    total = 10 ** (spec.total_snr_db / 10) * cfg.sigma2
    J = 10 ** (lmr_db / 10)
    split = rng.dirichlet(np.ones(K - 1)) if K > 1 else np.zeros(0)
    phases = rng.uniform(0, 2 * np.pi, K)
    delays = np.concatenate([[0.0], rng.uniform(0, spec.max_delay, K - 1)])
    dopplers = rng.uniform(-spec.max_doppler, spec.max_doppler, K)
    power = np.concatenate([[total * J / (1 + J)], total / (1 + J) * split])
    if K == 1:
        power[0] = total
    theta = float(np.deg2rad(spec.angle_deg))
    return CommChannel([PathTuple(complex(np.sqrt(pw) * np.exp(1j * ph)), float(tau), float(nu),
                                  theta)
                        for pw, ph, tau, nu in zip(power, phases, delays, dopplers)])


def _tradeoff_draw(cfg: ScenarioConfig, lmr_db, draw, scene, theta_axis):
    prm, geo = cfg.params(), cfg.geometry()
    channel = draw_comm_channel(cfg, lmr_db, draw)
    gram = ChannelGram(channel, prm, cfg.sigma2, geo)
    rows, patterns = [], []
    for rho in cfg.design.rho_grid:
        res = run_algorithm2(scene, channel, rho, prm, cfg.sigma2, geo, gram=gram)
        rows.append([lmr_db, rho, draw, res.snr_rad, 10 * np.log10(max(res.snr_rad, 1e-300)),
                     res.rate, res.rate / np.log(2), res.rate_approx])
        if draw == 0:
            bp = beampattern(res.beta_opt, theta_axis, geo)
            patterns.extend([lmr_db, rho, float(np.rad2deg(t)), float(b)]
                            for t, b in zip(theta_axis, bp))
    return rows, patterns


def run_tradeoff_experiment(cfg: ScenarioConfig, rho_grid=None, lmr_list=None,
                            workers: Optional[int] = None) -> Dict[str, Table]:
    """Sweep the radar weight for random channels at each LOS ratio."""
    if rho_grid is not None or lmr_list is not None:
        import copy

        cfg = copy.deepcopy(cfg)
        if rho_grid is not None:
            cfg.design.rho_grid = [float(r) for r in rho_grid]
        if lmr_list is not None:
            cfg.comm.random.lmr_db = [float(j) for j in lmr_list]
    scene = cfg.radar_scene()
    theta_axis = default_theta_axis(cfg.design.beampattern_step_deg)
    jobs = [(j, d) for j in cfg.comm.random.lmr_db for d in range(cfg.comm.random.draws)]
    n_jobs = workers or cfg.experiment.workers
    if n_jobs == 1:
        out = [_tradeoff_draw(cfg, j, d, scene, theta_axis) for j, d in jobs]
    else:
        out = Parallel(n_jobs=n_jobs)(delayed(_tradeoff_draw)(cfg, j, d, scene, theta_axis)
                                      for j, d in jobs)
    rows = [r for o in out for r in o[0]]
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    curve = Table(["lmr_db", "rho", "draw", "snr_rad", "snr_rad_db", "rate_nats", "rate_bits",
                   "rate_approx_nats"], rows)
    mean = Table(["lmr_db", "rho", "mean_snr_rad", "mean_snr_rad_db", "mean_rate_nats",
                  "mean_rate_bits"])
    for j in cfg.comm.random.lmr_db:
        for rho in cfg.design.rho_grid:
            sel = [r for r in rows if r[0] == j and r[1] == rho]
            s = float(np.mean([r[3] for r in sel]))
            rate = float(np.mean([r[5] for r in sel]))
            mean.rows.append([j, rho, s, 10 * np.log10(max(s, 1e-300)), rate, rate / np.log(2)])
    patterns = Table(["lmr_db", "rho", "theta_deg", "gain"],
                     sorted((p for o in out for p in o[1]), key=lambda r: (r[0], r[1], r[2])))
    return {"tradeoff": curve, "tradeoff_mean": mean, "beampattern": patterns}


# --------------------------------------------------------------------------
# single-shot profiles
# --------------------------------------------------------------------------

def _nearest(axis, value):
    return int(np.argmin(np.abs(np.asarray(axis) - value)))


def run_profile(cfg: ScenarioConfig) -> Dict[str, Table]:
    """Maps and spectra for one noisy frame (trial 0) plus design profiles."""
    prm, geo = cfg.params(), cfg.geometry()
    wf, obs, scene = simulate_trial(cfg, 0, 0)
    glrt, fft = make_detectors(cfg)
    glrt.fit(wf)
    fft.fit(wf)
    grid: DDGrid = glrt.grid_
    stat = glrt_map(obs, wf.S, grid, prm)
    ref = scene.targets[cfg.radar.reference_target]
    b = _nearest(grid.nu_axis, ref.nu)
    a = _nearest(grid.tau_axis, ref.tau)
    art = {}
    art["range_profile"] = Table(["range_m", "delay_s", "glrt_stat"], [
        [float(prm.delay_to_range(t)), float(t), float(v)] for t, v in zip(grid.tau_axis, stat[:, b])])
    art["velocity_profile"] = Table(["velocity_mps", "doppler_hz", "glrt_stat"], [
        [float(prm.doppler_to_velocity(n)), float(n), float(v)]
        for n, v in zip(grid.nu_axis, stat[a, :])])
    img = fft_benchmark_images(obs, wf.X_dd_windowed, prm, fft.os_tau, fft.os_nu, fft.variant)
    bf = _nearest(img.nu_axis, ref.nu)
    art["fft_range_profile"] = Table(["range_m", "delay_s", "fft_stat"], [
        [float(prm.delay_to_range(t)), float(t), float(v)]
        for t, v in zip(img.tau_axis, img.power[:, bf])])
    theta_axis = glrt.theta_axis_
    spec = angle_spectrum(obs, wf, ref.tau, ref.nu, theta_axis, prm, geo)
    art["angle_spectrum"] = Table(["theta_deg", "spectrum"], [
        [float(np.rad2deg(t)), float(v)] for t, v in zip(theta_axis, spec)])
    for name, det in (("detections_glrt", glrt), ("detections_fft", fft)):
        rep = det.predict(obs)
        art[name] = Table(["range_m", "velocity_mps", "angle_deg", "gain_abs2", "statistic",
                           "threshold"], [
            [float(prm.delay_to_range(tau)), float(prm.doppler_to_velocity(nu)),
             float(np.rad2deg(th)), abs(al) ** 2, d.statistic, d.threshold]
            for d in rep.detections for tau, nu, th, al in
            [(d.tau, d.nu, t, x) for t, x in zip(d.thetas, d.alphas)]])
    channel = cfg.explicit_channel() or draw_comm_channel(cfg, cfg.comm.random.lmr_db[0], 0)
    res = run_algorithm2(scene, channel, cfg.design.profile_rho, prm, cfg.sigma2, geo,
                         exact=prm.L <= 4096)
    e0 = np.zeros((prm.L, 1), dtype=complex)
    e0[0, 0] = 1.0
    h = time_to_dd(apply_HT_V(res.beta_opt, channel, prm, geo, e0), prm.N, prm.M)[:, 0]
    H = h.reshape((prm.N, prm.M), order="F")
    art["dd_channel"] = Table(["delay_index", "doppler_index", "delay_s", "doppler_hz", "magnitude"], [
        [n, m, n / prm.bandwidth, m / (prm.M * prm.T), float(abs(H[n, m]))]
        for m in range(prm.M) for n in range(prm.N)])
    bp_axis = default_theta_axis(cfg.design.beampattern_step_deg)
    art["beampattern"] = Table(["theta_deg", "gain"], [
        [float(np.rad2deg(t)), float(g)] for t, g in zip(bp_axis, beampattern(res.beta_opt, bp_axis, geo))])
    return art
