"""Steering vectors, radar/communication observation synthesis, DD channel.

Two independent routes produce radar observations. The compact route
applies ``C(nu) F^H B(tau) F`` to the sampled waveform matrix with FFTs. The
oracle route evaluates the continuous-time transmit signals at the delayed
instants ``t - tau`` (through the cyclic prefix) and multiplies by
``exp(j 2 pi nu t)``; it never touches DFT matrices or steering vectors.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ._validation import check_positive, check_random_state
from .frame import (
    SPEED_OF_LIGHT,
    OtfsParams,
    WaveformMatrix,
    WindowSet,
    dd_to_time,
    time_to_dd,
)


# --------------------------------------------------------------------------
# steering vectors
# --------------------------------------------------------------------------

def freq_steering(tau, params: OtfsParams) -> np.ndarray:
    """Frequency-domain steering vector ``b(tau) = b_N(tau) kron b_ISI(tau)``."""
    n = np.arange(params.N)
    m = np.arange(params.M)
    b_N = np.exp(-2j * np.pi * n * params.delta_f * tau)
    b_isi = np.exp(-2j * np.pi * (m / params.M) * params.delta_f * tau)
    return np.kron(b_N, b_isi)


def temporal_steering(nu, params: OtfsParams) -> np.ndarray:
    """Temporal steering vector ``c(nu) = c_M(nu) kron c_ICI(nu)``."""
    m = np.arange(params.M)
    ell = np.arange(params.N)
    c_M = np.exp(2j * np.pi * m * params.T * nu)
    c_ici = np.exp(2j * np.pi * (ell / params.N) * params.T * nu)
    return np.kron(c_M, c_ici)


def ula_steering(theta, count, spacing) -> np.ndarray:
    """ULA response referenced to the first element.

    ``spacing`` is in wavelengths; entry ``k`` is ``exp(j 2 pi spacing k sin(theta))``.
    """
    if abs(theta) > np.pi / 2 + 1e-12:
        raise ValueError(f"theta must lie in [-pi/2, pi/2], got {theta}")
    k = np.arange(count)
    return np.exp(2j * np.pi * spacing * k * np.sin(theta))


@dataclass(frozen=True)
class ArrayGeometry:
    """TX/RX ULA spacings in wavelengths.

    ``rx_spacing=None`` selects ``n_tx / 2``, which together with a
    half-wavelength TX array forms a filled ``n_tx * n_rx`` virtual ULA.
    """

    n_tx: int
    n_rx: int
    tx_spacing: float = 0.5
    rx_spacing: Optional[float] = None

    def __post_init__(self):
        check_positive(self.tx_spacing, "tx_spacing")
        if self.rx_spacing is None:
            object.__setattr__(self, "rx_spacing", self.n_tx * self.tx_spacing)
        check_positive(self.rx_spacing, "rx_spacing")

    @classmethod
    def for_params(cls, params: OtfsParams, **kwargs) -> "ArrayGeometry":
        return cls(params.n_tx, params.n_rx, **kwargs)

    def a_tx(self, theta) -> np.ndarray:
        return ula_steering(theta, self.n_tx, self.tx_spacing)

    def a_rx(self, theta) -> np.ndarray:
        return ula_steering(theta, self.n_rx, self.rx_spacing)

    def a_tx_matrix(self, thetas) -> np.ndarray:
        """Columns are ``a_T(theta)`` for each angle in ``thetas``."""
        thetas = np.atleast_1d(thetas)
        k = np.arange(self.n_tx)[:, None]
        return np.exp(2j * np.pi * self.tx_spacing * k * np.sin(thetas)[None, :])

    def a_rx_matrix(self, thetas) -> np.ndarray:
        thetas = np.atleast_1d(thetas)
        k = np.arange(self.n_rx)[:, None]
        return np.exp(2j * np.pi * self.rx_spacing * k * np.sin(thetas)[None, :])


# --------------------------------------------------------------------------
# scenes and observations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PathTuple:
    """One propagation path: gain, delay [s], Doppler [Hz], angle [rad]."""

    alpha: complex
    tau: float
    nu: float
    theta: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"path delay must be nonnegative, got {self.tau}")
        if abs(self.theta) > np.pi / 2:
            raise ValueError(f"path angle must lie in [-pi/2, pi/2], got {self.theta}")


@dataclass(frozen=True)
class RadarScene:
    targets: Sequence[PathTuple] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))

    def __len__(self):
        return len(self.targets)


@dataclass(frozen=True)
class CommChannel:
    """Multipath MISO channel; ``paths[0]`` is the LOS path."""

    paths: Sequence[PathTuple] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))

    def __len__(self):
        return len(self.paths)

    def lmr(self) -> float:
        """LOS-to-multipath power ratio ``|a_0|^2 / sum_{k>0} |a_k|^2``."""
        powers = np.array([abs(p.alpha) ** 2 for p in self.paths])
        rest = powers[1:].sum()
        return np.inf if rest == 0 else float(powers[0] / rest)


@dataclass(frozen=True)
class RadarObservation:
    """Time-spatial radar samples ``Y`` (NM x n_rx) and the noise variance."""

    Y: np.ndarray
    sigma2: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.Y)):
            raise ValueError("observation contains non-finite entries")


def complex_noise(rng, shape, sigma2) -> np.ndarray:
    """Circular complex Gaussian samples with variance ``sigma2``."""
    if sigma2 == 0:
        return np.zeros(shape, dtype=complex)
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    scale = np.sqrt(sigma2 / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _check_delays(paths, params):
    for p in paths:
        if p.tau > params.T_cp * (1 + 1e-12):
            raise ValueError(
                f"path delay {p.tau:.6g} s exceeds the cyclic prefix T_cp = {params.T_cp:.6g} s"
            )


def delay_doppler_shift(x, tau, nu, params: OtfsParams) -> np.ndarray:
    """``C(nu) F^H B(tau) F x`` along the leading axis of ``x``."""
    x = np.asarray(x, dtype=complex)
    b = freq_steering(tau, params)
    c = temporal_steering(nu, params)
    expand = (slice(None),) + (None,) * (x.ndim - 1)
    shifted = np.fft.ifft(b[expand] * np.fft.fft(x, axis=0, norm="ortho"), axis=0, norm="ortho")
    return c[expand] * shifted


def synth_radar_compact(waveform: WaveformMatrix, scene: RadarScene, sigma2=0.0,
                        seed=None, geometry: Optional[ArrayGeometry] = None) -> RadarObservation:
    """Radar samples from the compact time-spatial model.

    ``Y = sum_k alpha_k C(nu_k) F^H B(tau_k) F S a_T(theta_k) a_R(theta_k)^T + Z``.
    """
    params = waveform.params
    geometry = geometry or ArrayGeometry.for_params(params)
    _check_delays(scene.targets, params)
    Y = np.zeros((params.L, geometry.n_rx), dtype=complex)
    S = waveform.S
    for tgt in scene.targets:
        x = S @ geometry.a_tx(tgt.theta)
        y = delay_doppler_shift(x, tgt.tau, tgt.nu, params)
        Y += tgt.alpha * np.outer(y, geometry.a_rx(tgt.theta))
    rng = check_random_state(seed)
    Y += complex_noise(rng, Y.shape, sigma2)
    return RadarObservation(Y, float(sigma2))


def synth_radar_oracle(waveform: WaveformMatrix, scene: RadarScene, sigma2=0.0,
                       seed=None, geometry: Optional[ArrayGeometry] = None,
                       pulse="bandlimited") -> RadarObservation:
    """Radar samples by direct evaluation of the continuous-time echo.

    Samples ``sum_k alpha_k exp(j 2 pi nu_k t) a_R a_T^T s_CP(t - tau_k)`` at
    ``t = l T / N``. Noise is drawn exactly as in :func:`synth_radar_compact`
    so both routes share ``Z`` for a given seed.
    """
    params = waveform.params
    geometry = geometry or ArrayGeometry.for_params(params)
    _check_delays(scene.targets, params)
    t = params.sample_times()
    Y = np.zeros((params.L, geometry.n_rx), dtype=complex)
    for tgt in scene.targets:
        s_delayed = waveform.continuous(t - tgt.tau, pulse=pulse, cp=True)
        echo = np.exp(2j * np.pi * tgt.nu * t) * (s_delayed @ geometry.a_tx(tgt.theta))
        Y += tgt.alpha * np.outer(echo, geometry.a_rx(tgt.theta))
    rng = check_random_state(seed)
    Y += complex_noise(rng, Y.shape, sigma2)
    return RadarObservation(Y, float(sigma2))


def synth_comm(waveform: WaveformMatrix, channel: CommChannel, sigma2=0.0, seed=None,
               geometry: Optional[ArrayGeometry] = None) -> np.ndarray:
    """Time-domain samples at the single-antenna communication receiver."""
    params = waveform.params
    geometry = geometry or ArrayGeometry.for_params(params)
    _check_delays(channel.paths, params)
    y = np.zeros(params.L, dtype=complex)
    for path in channel.paths:
        x = waveform.S @ geometry.a_tx(path.theta)
        y += path.alpha * delay_doppler_shift(x, path.tau, path.nu, params)
    rng = check_random_state(seed)
    return y + complex_noise(rng, y.shape, sigma2)


def synth_comm_oracle(waveform: WaveformMatrix, channel: CommChannel, sigma2=0.0, seed=None,
                      geometry: Optional[ArrayGeometry] = None, pulse="bandlimited") -> np.ndarray:
    """MISO analogue of :func:`synth_radar_oracle`."""
    params = waveform.params
    geometry = geometry or ArrayGeometry.for_params(params)
    _check_delays(channel.paths, params)
    t = params.sample_times()
    y = np.zeros(params.L, dtype=complex)
    for path in channel.paths:
        s_delayed = waveform.continuous(t - path.tau, pulse=pulse, cp=True)
        y += path.alpha * np.exp(2j * np.pi * path.nu * t) * (s_delayed @ geometry.a_tx(path.theta))
    rng = check_random_state(seed)
    return y + complex_noise(rng, y.shape, sigma2)


def build_Hdd(windows: WindowSet, channel: CommChannel, params: OtfsParams,
              geometry: Optional[ArrayGeometry] = None) -> np.ndarray:
    """Dense DD-domain channel matrix (NM x NM).

    ``H_DD = (F_M kron I_N) sum_k alpha_k C(nu_k) F^H B(tau_k) F (F_M^H kron I_N) diag(W a_T(theta_k))``
    """
    geometry = geometry or ArrayGeometry.for_params(params)
    L = params.L
    W = windows.matrix()
    H = np.zeros((L, L), dtype=complex)
    eye_time = dd_to_time(np.eye(L), params.N, params.M)
    for path in channel.paths:
        weights = W @ geometry.a_tx(path.theta)
        H += path.alpha * delay_doppler_shift(eye_time * weights[None, :], path.tau, path.nu, params)
    return time_to_dd(H, params.N, params.M)


# --------------------------------------------------------------------------
# ambiguity limits
# --------------------------------------------------------------------------

def unambiguous_delay(params: OtfsParams, with_isi=True, cap_by_cp=True) -> float:
    """Maximum unambiguous delay [s].

    ``with_isi`` gives ``min(M / delta_f, T_cp)``, otherwise ``min(1 / delta_f, T_cp)``.
    ``cap_by_cp=False`` drops the cyclic-prefix cap, which is how the
    standard-processing row of the reference parameter table is tabulated.
    """
    base = (params.M if with_isi else 1) / params.delta_f
    return min(base, params.T_cp) if cap_by_cp else base


def unambiguous_doppler(params: OtfsParams, with_ici=True) -> float:
    """Width of the unambiguous Doppler interval [Hz]: ``N / T`` or ``1 / T``."""
    return (params.N if with_ici else 1) / params.T


def max_range(params: OtfsParams, with_isi=True, cap_by_cp=True) -> float:
    return SPEED_OF_LIGHT * unambiguous_delay(params, with_isi, cap_by_cp) / 2.0


def max_velocity(params: OtfsParams, with_ici=True) -> float:
    """Half-width of the unambiguous velocity interval [m/s] (symmetric about zero)."""
    return unambiguous_doppler(params, with_ici) * params.wavelength / 4.0


def scene_from_physical(params: OtfsParams, ranges, velocities, angles_deg, snr_db,
                        sigma2=1.0, phases=None) -> RadarScene:
    """Build a radar scene from ranges [m], radial velocities [m/s], angles [deg], SNRs [dB]."""
    ranges = np.atleast_1d(np.asarray(ranges, dtype=float))
    n = ranges.size
    velocities = np.broadcast_to(np.asarray(velocities, dtype=float), (n,))
    angles = np.deg2rad(np.broadcast_to(np.asarray(angles_deg, dtype=float), (n,)))
    snr = np.broadcast_to(np.asarray(snr_db, dtype=float), (n,))
    phases = np.zeros(n) if phases is None else np.broadcast_to(phases, (n,))
    amp = np.sqrt(10 ** (snr / 10) * sigma2)
    targets: List[PathTuple] = [
        PathTuple(complex(a * np.exp(1j * ph)), float(params.range_to_delay(r)),
                  float(params.velocity_to_doppler(v)), float(th))
        for a, ph, r, v, th in zip(amp, phases, ranges, velocities, angles)
    ]
    return RadarScene(targets)
