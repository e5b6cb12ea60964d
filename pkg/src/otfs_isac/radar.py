"""MIMO-OTFS radar sensing: GLRT delay-Doppler map, CA-CFAR, angle estimation.

The detection chain is

1. evaluate ``||S^H F^H B^H(tau) F C^H(nu) Y||_F^2`` over a delay-Doppler grid,
2. run a 2-D cell-averaging CFAR on the map,
3. for each detected cell, form the coherent angle spectrum and extract
   angles with a matching-pursuit style subtraction loop.

A conventional 2-D FFT processor (per spatial channel matched filtering in the
frequency-time domain, noncoherent integration) is provided as the benchmark.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import fft as sfft
from scipy import ndimage
from scipy.stats import beta as beta_dist
from sklearn.base import BaseEstimator

from ._validation import check_complex_array, check_int, check_probability
from .channel import ArrayGeometry, freq_steering, temporal_steering
from .frame import OtfsParams, WaveformMatrix, isfft, unvec

# --------------------------------------------------------------------------
# delay-Doppler grid
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DDGrid:
    """Delay and Doppler evaluation axes.

    ``tau_index``/``nu_index`` are set when the axes lie on the oversampled
    lattice ``tau = a / (N delta_f os_tau)``, ``nu = b / (M T os_nu)``; the
    map is then evaluated with FFTs. Otherwise it is evaluated point by point.
    """

    tau_axis: np.ndarray
    nu_axis: np.ndarray
    os_tau: int = 1
    os_nu: int = 1
    tau_index: Optional[np.ndarray] = None
    nu_index: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("tau_axis", "nu_axis"):
            ax = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if ax.ndim != 1 or ax.size == 0:
                raise ValueError(f"{name} must be a non-empty 1-D array")
            if np.any(np.diff(ax) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, ax)

    @property
    def shape(self):
        return (self.tau_axis.size, self.nu_axis.size)

    @property
    def is_lattice(self) -> bool:
        return self.tau_index is not None and self.nu_index is not None

    @classmethod
    def uniform(cls, params: OtfsParams, os_tau=2, os_nu=2, tau_max=None,
                nu_max=None) -> "DDGrid":
        """Oversampled lattice grid.

        Delays cover ``[0, tau_max]`` (default ``min(M / delta_f, T_cp)``),
        Dopplers cover ``[-nu_max, nu_max)`` (default ``N / (2T)``).
        """
        os_tau = check_int(os_tau, "os_tau")
        os_nu = check_int(os_nu, "os_nu")
        d_tau = params.T / (params.N * os_tau)
        d_nu = 1.0 / (params.M * params.T * os_nu)
        full_tau = params.M / params.delta_f
        if tau_max is None:
            tau_max = min(full_tau, params.T_cp)
        n_tau_full = params.L * os_tau
        n_tau = min(int(np.floor(tau_max / d_tau * (1 + 1e-12))) + 1, n_tau_full)
        if nu_max is None:
            nu_max = params.N / (2.0 * params.T)
        n_half = min(int(np.floor(nu_max / d_nu * (1 + 1e-12))), params.L * os_nu // 2)
        b = np.arange(-n_half, n_half)
        if b.size == 0:
            b = np.array([0])
        a = np.arange(n_tau)
        return cls(a * d_tau, b * d_nu, os_tau, os_nu, a, b)

    def delay_step(self):
        return self.tau_axis[1] - self.tau_axis[0] if self.tau_axis.size > 1 else np.inf

    def doppler_step(self):
        return self.nu_axis[1] - self.nu_axis[0] if self.nu_axis.size > 1 else np.inf


# --------------------------------------------------------------------------
# GLRT statistic and map
# --------------------------------------------------------------------------

def _as_S(S):
    return S.S if isinstance(S, WaveformMatrix) else np.asarray(S, dtype=complex)


def _as_Y(Y):
    return Y.Y if hasattr(Y, "Y") else np.asarray(Y, dtype=complex)


def projected_observation(Y, S, tau, nu, params: OtfsParams) -> np.ndarray:
    """``Q = S^H F^H B^H(tau) F C^H(nu) Y`` (n_tx x n_rx)."""
    Y = _as_Y(Y)
    S = _as_S(S)
    z = np.conj(temporal_steering(nu, params))[:, None] * Y
    Z = sfft.fft(z, axis=0, norm="ortho")
    Z *= np.conj(freq_steering(tau, params))[:, None]
    return S.conj().T @ sfft.ifft(Z, axis=0, norm="ortho")


def glrt_statistic(Y, S, tau, nu, params: OtfsParams) -> float:
    """``||S^H F^H B^H(tau) F C^H(nu) Y||_F^2`` at a continuous ``(tau, nu)``."""
    Q = projected_observation(Y, S, tau, nu, params)
    return float(np.sum(np.abs(Q) ** 2))


def matched_filter_output(Y, S, tau, nu, params: OtfsParams) -> np.ndarray:
    """Whitened virtual-array snapshot ``(S^H S)^{-1} Q``.

    For a single noiseless target at ``(tau, nu, theta)`` this equals
    ``alpha * a_T(theta) a_R(theta)^T``.
    """
    S_ = _as_S(S)
    Q = projected_observation(Y, S_, tau, nu, params)
    return np.linalg.solve(S_.conj().T @ S_, Q)


def _glrt_map_lattice(Y, S, grid: DDGrid, params: OtfsParams, chunk_bytes=64e6):
    L = params.L
    n_tx, n_rx = S.shape[1], Y.shape[1]
    n_tau_fft = L * grid.os_tau
    n_nu_fft = L * grid.os_nu
    S_hat = np.conj(sfft.fft(S, axis=0, norm="ortho"))
    Y_tilde = sfft.fft(Y, n=n_nu_fft, axis=0) / np.sqrt(L)
    k = np.arange(L)
    rows = grid.tau_index
    out = np.empty(grid.shape)
    per_line = n_tau_fft * n_tx * n_rx * 16
    step = max(1, int(chunk_bytes // per_line))
    for start in range(0, grid.nu_index.size, step):
        b = grid.nu_index[start:start + step]
        idx = (k[None, :] * grid.os_nu + b[:, None]) % n_nu_fft
        Z_hat = Y_tilde[idx]  # (nb, L, n_rx)
        P = S_hat.T[None, :, None, :] * Z_hat.transpose(0, 2, 1)[:, None, :, :]
        P = P.reshape(b.size, n_tx * n_rx, L)
        corr = sfft.ifft(P, n=n_tau_fft, axis=2)[:, :, rows] * n_tau_fft
        out[:, start:start + b.size] = np.sum(corr.real ** 2 + corr.imag ** 2, axis=1).T
    return out


def _glrt_map_direct(Y, S, grid: DDGrid, params: OtfsParams):
    S_hat = np.conj(sfft.fft(S, axis=0, norm="ortho"))
    out = np.empty(grid.shape)
    Bc = np.stack([np.conj(freq_steering(t, params)) for t in grid.tau_axis], axis=1)
    for j, nu in enumerate(grid.nu_axis):
        z = np.conj(temporal_steering(nu, params))[:, None] * Y
        Z = sfft.fft(z, axis=0, norm="ortho")
        Q = np.einsum("ki,ka,kr->air", S_hat, Bc, Z, optimize=True)
        out[:, j] = np.sum(np.abs(Q) ** 2, axis=(1, 2))
    return out


def glrt_map(Y, S, grid: DDGrid, params: OtfsParams, method="auto") -> np.ndarray:
    """GLRT statistic over ``grid``; ``out[a, b]`` is at ``(tau_axis[a], nu_axis[b])``."""
    Y = check_complex_array(_as_Y(Y), "Y", ndim=2, shape=(params.L, None))
    S = check_complex_array(_as_S(S), "S", ndim=2, shape=(params.L, None))
    if method == "auto":
        method = "fft" if grid.is_lattice else "direct"
    if method == "fft":
        if not grid.is_lattice:
            raise ValueError("fft evaluation requires a lattice grid")
        return _glrt_map_lattice(Y, S, grid, params)
    if method == "direct":
        return _glrt_map_direct(Y, S, grid, params)
    raise ValueError(f"unknown method {method!r}")


def _parabolic_offset(left, centre, right):
    den = left - 2.0 * centre + right
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / den, -0.5, 0.5))


def interpolate_peak(stat, index, wrap_nu=False):
    """Sub-cell peak offsets ``(da, db)`` from a 3-point parabola per axis."""
    a, b = index
    n_a, n_b = stat.shape
    da = db = 0.0
    if 0 < a < n_a - 1:
        da = _parabolic_offset(stat[a - 1, b], stat[a, b], stat[a + 1, b])
    if 0 < b < n_b - 1 or wrap_nu:
        db = _parabolic_offset(stat[a, (b - 1) % n_b], stat[a, b], stat[a, (b + 1) % n_b])
    return da, db


# --------------------------------------------------------------------------
# CA-CFAR
# --------------------------------------------------------------------------

def cfar_scale(p_fa, n_train, n_looks=1) -> float:
    """Threshold multiplier on the training-cell mean.

    For exponential cells (``n_looks=1``) this is ``N (P_fa^{-1/N} - 1)``.
    For cells that are sums of ``n_looks`` exponentials the ratio of the
    cell under test to the training sum is Beta distributed, which gives the
    exact multiplier for that case.
    """
    p_fa = check_probability(p_fa, "p_fa")
    if n_looks == 1:
        return float(n_train * (p_fa ** (-1.0 / n_train) - 1.0))
    u = beta_dist.isf(p_fa, n_looks, n_looks * n_train)
    return float(n_train * u / (1.0 - u))


@dataclass(frozen=True)
class CfarHit:
    index: Tuple[int, ...]
    statistic: float
    threshold: float


def cfar_threshold(stat, p_fa, training=16, guard=2, mode="wrap", n_looks=1):
    """Per-cell CA-CFAR threshold map and the number of training cells."""
    stat = np.asarray(stat, dtype=float)
    if np.any(stat < 0) or not np.all(np.isfinite(stat)):
        raise ValueError("CFAR input must be finite and nonnegative")
    d = stat.ndim
    training = np.broadcast_to(np.asarray(training, dtype=int), (d,))
    guard = np.broadcast_to(np.asarray(guard, dtype=int), (d,))
    if np.any(training < 1) or np.any(guard < 0):
        raise ValueError("training must be >= 1 and guard >= 0")
    outer = 2 * (training + guard) + 1
    inner = 2 * guard + 1
    if np.any(np.asarray(stat.shape) < outer):
        raise ValueError(f"map of shape {stat.shape} is smaller than the CFAR window {tuple(outer)}")
    n_outer = int(np.prod(outer))
    n_inner = int(np.prod(inner))
    n_train = n_outer - n_inner
    outer_sum = ndimage.uniform_filter(stat, size=tuple(outer), mode=mode) * n_outer
    inner_sum = ndimage.uniform_filter(stat, size=tuple(inner), mode=mode) * n_inner
    noise = np.maximum(outer_sum - inner_sum, 0.0) / n_train
    return cfar_scale(p_fa, n_train, n_looks) * noise, n_train


def strict_local_max(stat, guard=2, mode="wrap") -> np.ndarray:
    """Cells strictly larger than every other cell in their guard neighbourhood."""
    stat = np.asarray(stat, dtype=float)
    size = 2 * np.broadcast_to(np.asarray(guard, dtype=int), (stat.ndim,)) + 1
    footprint = np.ones(tuple(size), dtype=bool)
    footprint[tuple(s // 2 for s in size)] = False
    neighbour = ndimage.maximum_filter(stat, footprint=footprint, mode=mode)
    return stat > neighbour


def cfar_detect(stat, p_fa, training=16, guard=2, mode="wrap", peak_only=True,
                n_looks=1) -> List[CfarHit]:
    """Cell-averaging CFAR on an N-D nonnegative map.

    Returns hits sorted by decreasing statistic. ``peak_only`` additionally
    requires a strict local maximum over the guard neighbourhood.
    """
    stat = np.asarray(stat, dtype=float)
    thr, _ = cfar_threshold(stat, p_fa, training, guard, mode, n_looks)
    mask = stat > thr
    if peak_only:
        mask &= strict_local_max(stat, np.maximum(np.asarray(guard), 1), mode)
    idx = np.argwhere(mask)
    hits = [CfarHit(tuple(int(v) for v in i), float(stat[tuple(i)]), float(thr[tuple(i)]))
            for i in idx]
    hits.sort(key=lambda h: -h.statistic)
    return hits


# --------------------------------------------------------------------------
# angle stage
# --------------------------------------------------------------------------

def default_theta_axis(step_deg=0.5) -> np.ndarray:
    n = int(round(180.0 / step_deg))
    return np.deg2rad(np.linspace(-90.0, 90.0, n + 1))


def _spectrum_from_Q(Q, R, A_T, A_R):
    num = np.abs(np.sum(np.conj(A_T) * (Q @ np.conj(A_R)), axis=0)) ** 2
    den = np.real(np.sum(np.conj(A_T) * (R @ A_T), axis=0))
    if np.any(den <= 0):
        raise FloatingPointError("angle spectrum normalisation is not positive")
    return num / den


def angle_spectrum(Y, S, tau_hat, nu_hat, theta_axis, params: OtfsParams,
                   geometry: Optional[ArrayGeometry] = None) -> np.ndarray:
    """``|a_T^H Q a_R^*|^2 / (a_T^H S^H S a_T)`` over ``theta_axis``."""
    geometry = geometry or ArrayGeometry.for_params(params)
    S_ = _as_S(S)
    Q = projected_observation(Y, S_, tau_hat, nu_hat, params)
    R = S_.conj().T @ S_
    return _spectrum_from_Q(Q, R, geometry.a_tx_matrix(theta_axis), geometry.a_rx_matrix(theta_axis))


@dataclass
class AngleFit:
    thetas: List[float]
    alphas: List[complex]
    residual_energy: float
    iterations: int


def _ls_gains(Q, R, a_t, a_r):
    """Joint least-squares gains for rank-one components ``R a_T a_R^T``."""
    if a_t.shape[1] == 0:
        return np.zeros(0, dtype=complex)
    gram = (a_t.conj().T @ R @ a_t) * (a_r.conj().T @ a_r)
    rhs = np.sum(np.conj(a_t) * (Q @ np.conj(a_r)), axis=0)
    return np.linalg.lstsq(gram, rhs, rcond=None)[0]


def _residual(Q, R, a_t, a_r, alphas):
    if len(alphas) == 0:
        return Q.copy()
    return Q - (R @ a_t) @ (alphas[:, None] * a_r.T)


def mainlobe_cells(geometry: ArrayGeometry, theta_axis) -> int:
    """Broadside null-to-peak width of the virtual array in angle-grid cells."""
    aperture = ((geometry.n_tx - 1) * geometry.tx_spacing
                + (geometry.n_rx - 1) * geometry.rx_spacing + geometry.tx_spacing)
    width = np.rad2deg(np.arcsin(min(1.0 / aperture, 1.0)))
    step = np.rad2deg(np.min(np.diff(theta_axis)))
    return max(int(np.ceil(width / step - 1e-9)), 1)


def subtract_and_refine(Q, R, theta_axis, geometry: ArrayGeometry, p_fa=1e-3,
                        training=16, guard=None, max_iter=4, energy_floor=1e-12,
                        initial: Optional[List[float]] = None) -> AngleFit:
    """Matching-pursuit angle extraction on a virtual-array snapshot.

    Each iteration picks the global maximum of the residual angle spectrum,
    accepts it if it passes a 1-D CA-CFAR test, refits all gains jointly by
    least squares and subtracts the reconstruction. A final pass re-estimates
    every angle with the other components removed. ``guard=None`` sizes the
    CFAR guard band to the main lobe (see :func:`mainlobe_cells`).
    """
    theta_axis = np.asarray(theta_axis, dtype=float)
    if guard is None:
        guard = mainlobe_cells(geometry, theta_axis)
    A_T = geometry.a_tx_matrix(theta_axis)
    A_R = geometry.a_rx_matrix(theta_axis)
    e0 = float(np.sum(np.abs(Q) ** 2))
    picks: List[int] = []
    if initial:
        picks = [int(np.argmin(np.abs(theta_axis - t))) for t in initial]
    alphas = _ls_gains(Q, R, A_T[:, picks], A_R[:, picks])
    resid = _residual(Q, R, A_T[:, picks], A_R[:, picks], alphas)
    it = 0
    while it < max_iter and e0 > 0:
        if np.sum(np.abs(resid) ** 2) <= energy_floor * e0:
            break
        spec = _spectrum_from_Q(resid, R, A_T, A_R)
        j = int(np.argmax(spec))
        thr, _ = cfar_threshold(spec, p_fa, training, guard, mode="reflect")
        if spec[j] <= thr[j] or j in picks:
            break
        picks.append(j)
        alphas = _ls_gains(Q, R, A_T[:, picks], A_R[:, picks])
        resid = _residual(Q, R, A_T[:, picks], A_R[:, picks], alphas)
        it += 1
    if len(picks) > 1:
        for n in range(len(picks)):
            others = [p for m, p in enumerate(picks) if m != n]
            part = _residual(Q, R, A_T[:, others], A_R[:, others], np.delete(alphas, n))
            picks[n] = int(np.argmax(_spectrum_from_Q(part, R, A_T, A_R)))
        picks = list(dict.fromkeys(picks))
        alphas = _ls_gains(Q, R, A_T[:, picks], A_R[:, picks])
        resid = _residual(Q, R, A_T[:, picks], A_R[:, picks], alphas)
    return AngleFit([float(theta_axis[p]) for p in picks], [complex(a) for a in alphas],
                    float(np.sum(np.abs(resid) ** 2)), it)


def estimate_gain(Y, S, tau, nu, theta, params: OtfsParams,
                  geometry: Optional[ArrayGeometry] = None) -> complex:
    """``tr(A^H Y) / ||A||_F^2`` for ``A = C F^H B F S a_T a_R^T``."""
    geometry = geometry or ArrayGeometry.for_params(params)
    S_ = _as_S(S)
    Q = projected_observation(Y, S_, tau, nu, params)
    a_t, a_r = geometry.a_tx(theta), geometry.a_rx(theta)
    num = a_t.conj() @ Q @ a_r.conj()
    den = np.real(a_t.conj() @ (S_.conj().T @ S_) @ a_t) * np.real(a_r.conj() @ a_r)
    return complex(num / den)


# --------------------------------------------------------------------------
# detection reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Detection:
    tau: float
    nu: float
    thetas: Tuple[float, ...]
    alphas: Tuple[complex, ...]
    statistic: float
    threshold: float
    cell: Tuple[int, int]


@dataclass
class DetectionReport:
    detections: List[Detection]
    p_fa: float
    cfar: dict
    tau_axis: np.ndarray
    nu_axis: np.ndarray
    dd_map: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self):
        return len(self.detections)

    def targets(self) -> List[Tuple[float, float, float, complex]]:
        """One ``(tau, nu, theta, alpha)`` tuple per extracted angle."""
        out = []
        for d in self.detections:
            for th, al in zip(d.thetas, d.alphas):
                out.append((d.tau, d.nu, th, al))
        return out


def _angle_stage(hits, Q_of, R_of, tau_axis, nu_axis, theta_axis, geometry, p_fa, angle_cfg):
    """``Q_of(a, b)`` returns ``(tau, nu, Q)`` for the detected cell ``(a, b)``."""
    dets = []
    for h in hits:
        a, b = h.index
        tau, nu, Q = Q_of(a, b)
        fit = subtract_and_refine(Q, R_of, theta_axis, geometry, p_fa=p_fa, **angle_cfg)
        dets.append(Detection(float(tau), float(nu), tuple(fit.thetas),
                              tuple(fit.alphas), h.statistic, h.threshold, (a, b)))
    return dets


def run_algorithm1(Y, waveform: WaveformMatrix, grid: Optional[DDGrid] = None,
                   theta_axis=None, p_fa=1e-3, cfar_cfg: Optional[dict] = None,
                   angle_cfg: Optional[dict] = None,
                   geometry: Optional[ArrayGeometry] = None, keep_map=False,
                   refine=True) -> DetectionReport:
    """GLRT map, 2-D CFAR, then angle extraction at every detected cell.

    With ``refine=True`` each detected cell is moved to the vertex of a
    parabola through its neighbours before the angle stage.
    """
    params = waveform.params
    geometry = geometry or ArrayGeometry.for_params(params)
    grid = grid or DDGrid.uniform(params)
    theta_axis = default_theta_axis() if theta_axis is None else np.asarray(theta_axis, float)
    cfar_cfg = {"training": 16, "guard": 2, "mode": "wrap", **(cfar_cfg or {})}
    angle_cfg = {"training": 16, "guard": None, "max_iter": 4, **(angle_cfg or {})}
    Yv = _as_Y(Y)
    stat = glrt_map(Yv, waveform.S, grid, params)
    hits = cfar_detect(stat, p_fa, peak_only=True, **cfar_cfg)
    R = waveform.gram()

    d_tau, d_nu = grid.delay_step(), grid.doppler_step()

    def Q_of(a, b):
        tau, nu = grid.tau_axis[a], grid.nu_axis[b]
        if refine and np.isfinite(d_tau) and np.isfinite(d_nu):
            da, db = interpolate_peak(stat, (a, b))
            tau, nu = max(tau + da * d_tau, 0.0), nu + db * d_nu
        return tau, nu, projected_observation(Yv, waveform.S, tau, nu, params)

    dets = _angle_stage(hits, Q_of, R, grid.tau_axis, grid.nu_axis, theta_axis, geometry,
                        p_fa, angle_cfg)
    return DetectionReport(dets, p_fa, dict(cfar_cfg), grid.tau_axis, grid.nu_axis,
                           stat if keep_map else None)


# --------------------------------------------------------------------------
# 2-D FFT benchmark
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FftImage:
    """Per-channel complex range-Doppler images and their axes."""

    images: np.ndarray  # (n_tau, n_nu, n_tx, n_rx)
    tau_axis: np.ndarray
    nu_axis: np.ndarray
    weights: np.ndarray  # diagonal normalisation per TX antenna

    @property
    def power(self) -> np.ndarray:
        return np.sum(np.abs(self.images) ** 2, axis=(2, 3))


def fft_benchmark_images(Y, X_dd_windowed, params: OtfsParams, os_tau=2, os_nu=2,
                         variant="matched") -> FftImage:
    """Range-Doppler images by frequency-time symbol matching.

    ``variant="matched"`` multiplies by ``conj(X_i^FT)``; ``"reciprocal"``
    divides by ``X_i^FT`` on its support. Delays span ``[0, 1/delta_f)``
    and Dopplers ``[-1/(2T), 1/(2T))``.
    """
    Y = check_complex_array(_as_Y(Y), "Y", ndim=2, shape=(params.L, None))
    N, M = params.N, params.M
    X_ft = np.stack([isfft(X) for X in np.asarray(X_dd_windowed)])  # (n_tx, N, M)
    Y_ft = sfft.fft(np.stack([unvec(y, N, M) for y in Y.T]), axis=1, norm="ortho")  # (n_rx, N, M)
    mag2 = np.abs(X_ft) ** 2
    if variant == "matched":
        ref = np.conj(X_ft)
        weights = mag2.sum(axis=(1, 2))
    elif variant == "reciprocal":
        support = mag2 > 1e-12 * mag2.max()
        ref = np.where(support, np.conj(X_ft) / np.where(support, mag2, 1.0), 0.0)
        weights = support.sum(axis=(1, 2)).astype(float)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    D = ref[:, None] * Y_ft[None, :]  # (n_tx, n_rx, N, M)
    n_tau, n_nu = N * os_tau, M * os_nu
    rng = sfft.ifft(D, n=n_tau, axis=2) * n_tau
    img = sfft.fftshift(sfft.fft(rng, n=n_nu, axis=3), axes=3)
    images = np.transpose(img, (2, 3, 0, 1))
    tau_axis = np.arange(n_tau) / (N * params.delta_f * os_tau)
    nu_axis = (np.arange(n_nu) - n_nu // 2) / (M * params.T * os_nu)
    return FftImage(images, tau_axis, nu_axis, weights)


def fft_benchmark(Y, waveform: WaveformMatrix, os_tau=2, os_nu=2, theta_axis=None,
                  p_fa=1e-3, cfar_cfg: Optional[dict] = None, angle_cfg: Optional[dict] = None,
                  geometry: Optional[ArrayGeometry] = None, variant="matched",
                  keep_map=False) -> DetectionReport:
    """Noncoherent 2-D FFT processor followed by the same CFAR and angle stages."""
    params = waveform.params
    geometry = geometry or ArrayGeometry.for_params(params)
    theta_axis = default_theta_axis() if theta_axis is None else np.asarray(theta_axis, float)
    cfar_cfg = {"training": 16, "guard": 2, "mode": "wrap", **(cfar_cfg or {})}
    angle_cfg = {"training": 16, "guard": None, "max_iter": 4, **(angle_cfg or {})}
    img = fft_benchmark_images(Y, waveform.X_dd_windowed, params, os_tau, os_nu, variant)
    stat = img.power
    hits = cfar_detect(stat, p_fa, peak_only=True, **cfar_cfg)
    R = np.diag(img.weights).astype(complex)

    def Q_of(a, b):
        return img.tau_axis[a], img.nu_axis[b], img.images[a, b]

    dets = _angle_stage(hits, Q_of, R, img.tau_axis, img.nu_axis, theta_axis, geometry,
                        p_fa, angle_cfg)
    return DetectionReport(dets, p_fa, dict(cfar_cfg), img.tau_axis, img.nu_axis,
                           stat if keep_map else None)


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------

class _DetectorBase(BaseEstimator):
    def fit(self, X: WaveformMatrix, y=None):
        """Store the transmit waveform ``X`` the observations will be matched to."""
        if not isinstance(X, WaveformMatrix):
            raise TypeError("fit expects a WaveformMatrix")
        check_probability(self.p_fa, "p_fa")
        self.waveform_ = X
        self.params_ = X.params
        self.geometry_ = ArrayGeometry(X.params.n_tx, X.params.n_rx, self.tx_spacing,
                                       self.rx_spacing)
        self.theta_axis_ = default_theta_axis(self.angle_step_deg)
        return self

    def _cfar_cfg(self):
        return {"training": self.training, "guard": self.guard, "mode": self.cfar_mode}

    def _angle_cfg(self):
        return {"training": self.angle_training, "guard": self.angle_guard,
                "max_iter": self.max_omp_iter}

    def _check_fitted(self):
        if not hasattr(self, "waveform_"):
            raise RuntimeError(f"{type(self).__name__} is not fitted yet")


class GLRTDetector(_DetectorBase):
    """Reduced-complexity GLRT sensing of delay, Doppler and angle.

    Parameters
    ----------
    p_fa : float
        CFAR false-alarm probability (used for both the DD map and angles).
    os_tau, os_nu : int
        Grid oversampling relative to ``1/(N delta_f)`` and ``1/(M T)``.
    tau_max, nu_max : float or None
        Delay span ``[0, tau_max]`` and Doppler span ``[-nu_max, nu_max)``.
    training, guard : int
        2-D CFAR window per dimension.
    """

    def __init__(self, p_fa=1e-3, os_tau=2, os_nu=2, tau_max=None, nu_max=None, training=16,
                 guard=2, cfar_mode="wrap", angle_step_deg=0.5, angle_training=16,
                 angle_guard=None, max_omp_iter=4, tx_spacing=0.5, rx_spacing=None, refine=True):
        self.p_fa = p_fa
        self.os_tau = os_tau
        self.os_nu = os_nu
        self.refine = refine
        self.tau_max = tau_max
        self.nu_max = nu_max
        self.training = training
        self.guard = guard
        self.cfar_mode = cfar_mode
        self.angle_step_deg = angle_step_deg
        self.angle_training = angle_training
        self.angle_guard = angle_guard
        self.max_omp_iter = max_omp_iter
        self.tx_spacing = tx_spacing
        self.rx_spacing = rx_spacing

    def fit(self, X, y=None):
        super().fit(X)
        self.grid_ = DDGrid.uniform(self.params_, self.os_tau, self.os_nu, self.tau_max,
                                    self.nu_max)
        return self

    def decision_function(self, Y) -> np.ndarray:
        self._check_fitted()
        return glrt_map(Y, self.waveform_.S, self.grid_, self.params_)

    def predict(self, Y, keep_map=False) -> DetectionReport:
        self._check_fitted()
        return run_algorithm1(Y, self.waveform_, self.grid_, self.theta_axis_, self.p_fa,
                              self._cfar_cfg(), self._angle_cfg(), self.geometry_, keep_map,
                              self.refine)


class FFTBenchmarkDetector(_DetectorBase):
    """Conventional 2-D FFT range-Doppler processor with noncoherent integration."""

    def __init__(self, p_fa=1e-3, os_tau=2, os_nu=2, variant="matched", training=16, guard=2,
                 cfar_mode="wrap", angle_step_deg=0.5, angle_training=16, angle_guard=None,
                 max_omp_iter=4, tx_spacing=0.5, rx_spacing=None):
        self.p_fa = p_fa
        self.os_tau = os_tau
        self.os_nu = os_nu
        self.variant = variant
        self.training = training
        self.guard = guard
        self.cfar_mode = cfar_mode
        self.angle_step_deg = angle_step_deg
        self.angle_training = angle_training
        self.angle_guard = angle_guard
        self.max_omp_iter = max_omp_iter
        self.tx_spacing = tx_spacing
        self.rx_spacing = rx_spacing

    def decision_function(self, Y) -> np.ndarray:
        self._check_fitted()
        return fft_benchmark_images(Y, self.waveform_.X_dd_windowed, self.params_, self.os_tau,
                                    self.os_nu, self.variant).power

    def predict(self, Y, keep_map=False) -> DetectionReport:
        self._check_fitted()
        return fft_benchmark(Y, self.waveform_, self.os_tau, self.os_nu, self.theta_axis_,
                             self.p_fa, self._cfar_cfg(), self._angle_cfg(), self.geometry_,
                             self.variant, keep_map)
