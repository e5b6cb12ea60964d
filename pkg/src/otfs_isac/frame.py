"""OTFS transmit chain: DD frames, windowing, ISFFT, Heisenberg transform.

Vectorization follows the column-stacking convention throughout: for an
``N x M`` delay-Doppler or time grid, ``vec(X)[m * N + n] = X[n, m]``. The
sampled time signal of one antenna is therefore ordered symbol by symbol,
which is what ``vec(X_dd @ F_M^H)`` produces.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import (
    check_complex_array,
    check_int,
    check_positive,
    check_random_state,
    check_real_array,
)

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class OtfsParams:
    """Numerology of one MIMO-OTFS frame.

    ``T`` may be omitted; it is derived from ``delta_f`` and, if given, must
    match ``1 / delta_f`` to 1e-12 relative.
    """

    N: int
    M: int
    delta_f: float
    T_cp: float
    fc: float = 28e9
    n_tx: int = 1
    n_rx: int = 1
    T: Optional[float] = None

    def __post_init__(self):
        check_int(self.N, "N")
        check_int(self.M, "M")
        check_int(self.n_tx, "n_tx")
        check_int(self.n_rx, "n_rx")
        check_positive(self.delta_f, "delta_f")
        check_positive(self.T_cp, "T_cp")
        check_positive(self.fc, "fc")
        symbol = 1.0 / self.delta_f
        if self.T is None:
            object.__setattr__(self, "T", symbol)
        elif abs(self.T - symbol) > 1e-12 * symbol:
            raise ValueError(f"T must equal 1/delta_f = {symbol!r}, got {self.T!r}")

    @property
    def L(self) -> int:
        """Samples per frame (``N * M``)."""
        return self.N * self.M

    @property
    def sample_period(self) -> float:
        return self.T / self.N

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.fc

    @property
    def bandwidth(self) -> float:
        return self.N * self.delta_f

    def sample_times(self) -> np.ndarray:
        return np.arange(self.L) * self.sample_period

    def range_to_delay(self, r):
        return 2.0 * np.asarray(r, dtype=float) / SPEED_OF_LIGHT

    def delay_to_range(self, tau):
        return np.asarray(tau, dtype=float) * SPEED_OF_LIGHT / 2.0

    def velocity_to_doppler(self, v):
        return 2.0 * np.asarray(v, dtype=float) / self.wavelength

    def doppler_to_velocity(self, nu):
        return np.asarray(nu, dtype=float) * self.wavelength / 2.0


# --------------------------------------------------------------------------
# symbol alphabets and frames
# --------------------------------------------------------------------------

def qam_constellation(order: int = 64) -> np.ndarray:
    """Square QAM alphabet normalized to unit average power."""
    side = int(round(np.sqrt(order)))
    if side * side != order or side < 2:
        raise ValueError(f"order must be a square number >= 4, got {order}")
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    points = (levels[:, None] + 1j * levels[None, :]).ravel()
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


@dataclass(frozen=True)
class DDFrame:
    """An ``N x M`` grid of delay-Doppler data symbols."""

    X_dd: np.ndarray

    def __post_init__(self):
        X = check_complex_array(self.X_dd, "X_dd", ndim=2)
        X.setflags(write=False)
        object.__setattr__(self, "X_dd", X)

    @property
    def shape(self):
        return self.X_dd.shape

    def vec(self) -> np.ndarray:
        return vec(self.X_dd)

    @classmethod
    def random(cls, N, M, order=64, seed=None) -> "DDFrame":
        rng = check_random_state(seed)
        alphabet = qam_constellation(order)
        return cls(rng.choice(alphabet, size=(N, M)))


def vec(X) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(x, N, M) -> np.ndarray:
    return np.asarray(x).reshape((N, M), order="F")


# --------------------------------------------------------------------------
# DD windows
# --------------------------------------------------------------------------

class WindowMode(str, Enum):
    SEARCH = "search"
    TRACK = "track"


@dataclass(frozen=True)
class WindowSet:
    """Per-antenna DD windows ``W_i`` stored as an ``(n_tx, N, M)`` array.

    In search mode the windows are disjoint Boolean masks covering the grid.
    In track mode ``vec(W_i) = beta_i * p`` with a common real amplitude
    vector ``p``.
    """

    mode: WindowMode
    W: np.ndarray
    beta: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None

    def __post_init__(self):
        W = check_complex_array(self.W, "W", ndim=3)
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "mode", WindowMode(self.mode))
        self.validate()

    @property
    def n_tx(self) -> int:
        return self.W.shape[0]

    @property
    def grid_shape(self):
        return self.W.shape[1:]

    def matrix(self) -> np.ndarray:
        """The ``NM x n_tx`` matrix whose column ``i`` is ``vec(W_i)``."""
        return self.W.transpose(0, 2, 1).reshape(self.n_tx, -1).T

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.W) ** 2))

    def validate(self, atol=1e-12):
        if self.mode is WindowMode.SEARCH:
            if not np.all(np.isin(self.W, (0.0, 1.0))):
                raise ValueError("search-mode windows must be Boolean masks")
            counts = np.sum(self.W.real, axis=0)
            if not np.all(counts == 1.0):
                raise ValueError(
                    "search-mode masks must be mutually exclusive and cover every DD bin"
                )
        else:
            if self.beta is None or self.p is None:
                raise ValueError("track-mode windows need beta and p")
            beta = np.asarray(self.beta, dtype=complex)
            p = np.asarray(self.p, dtype=float)
            if np.any(p < 0):
                raise ValueError("track-mode amplitudes p must be nonnegative")
            expected = beta[:, None] * p[None, :]
            if not np.allclose(self.matrix().T, expected, atol=atol, rtol=0):
                raise ValueError("track-mode windows must satisfy vec(W_i) = beta_i * p")

    @classmethod
    def search(cls, N, M, n_tx, seed=None) -> "WindowSet":
        """Random balanced partition of the DD grid into ``n_tx`` masks.

        Every antenna receives ``floor(NM / n_tx)`` or ``ceil(NM / n_tx)`` bins.
        With more antennas than bins some masks are empty; those antennas stay
        silent and the waveform Gram matrix is singular.
        """
        rng = check_random_state(seed)
        L = N * M
        owner = np.arange(L) % n_tx
        owner = owner[rng.permutation(L)]
        W = np.zeros((n_tx, L))
        W[owner, np.arange(L)] = 1.0
        W = W.reshape(n_tx, M, N).transpose(0, 2, 1)
        return cls(WindowMode.SEARCH, W)

    @classmethod
    def full(cls, N, M) -> "WindowSet":
        """Single-antenna all-ones window."""
        return cls(WindowMode.SEARCH, np.ones((1, N, M)))

    @classmethod
    def track(cls, beta, p, N, M) -> "WindowSet":
        beta = np.atleast_1d(np.asarray(beta, dtype=complex))
        p = check_real_array(p, "p", ndim=1, nonnegative=True)
        if p.size != N * M:
            raise ValueError(f"p must have N*M = {N * M} entries, got {p.size}")
        cols = beta[:, None] * p[None, :]
        W = cols.reshape(beta.size, M, N).transpose(0, 2, 1)
        return cls(WindowMode.TRACK, W, beta=beta, p=p)


def apply_windows(frame: DDFrame, windows: WindowSet) -> np.ndarray:
    """Per-antenna windowed frames ``X_dd * W_i``, shape ``(n_tx, N, M)``."""
    if frame.shape != windows.grid_shape:
        raise ValueError(
            f"frame shape {frame.shape} does not match window shape {windows.grid_shape}"
        )
    return frame.X_dd[None, :, :] * windows.W


# --------------------------------------------------------------------------
# transforms
# --------------------------------------------------------------------------

def isfft(X) -> np.ndarray:
    """``F_N @ X @ F_M^H`` with unitary DFT matrices."""
    X = np.asarray(X, dtype=complex)
    return np.fft.ifft(np.fft.fft(X, axis=0, norm="ortho"), axis=1, norm="ortho")


def sfft(X) -> np.ndarray:
    """Inverse of :func:`isfft`: ``F_N^H @ X @ F_M``."""
    X = np.asarray(X, dtype=complex)
    return np.fft.fft(np.fft.ifft(X, axis=0, norm="ortho"), axis=1, norm="ortho")


def dd_to_time(x, N, M) -> np.ndarray:
    """Apply ``(F_M^H kron I_N)`` to the leading axis of ``x`` (length NM)."""
    x = np.asarray(x, dtype=complex)
    tail = x.shape[1:]
    grid = x.reshape((M, N) + tail)
    return np.fft.ifft(grid, axis=0, norm="ortho").reshape(x.shape)


def time_to_dd(x, N, M) -> np.ndarray:
    """Apply ``(F_M kron I_N)`` to the leading axis of ``x`` (length NM)."""
    x = np.asarray(x, dtype=complex)
    tail = x.shape[1:]
    grid = x.reshape((M, N) + tail)
    return np.fft.fft(grid, axis=0, norm="ortho").reshape(x.shape)


def _pulse_diagonal(G_tx, N) -> np.ndarray:
    if G_tx is None:
        return np.ones(N)
    G = np.asarray(G_tx)
    if G.ndim == 2:
        if G.shape != (N, N):
            raise ValueError(f"G_tx must be {N}x{N}, got {G.shape}")
        if np.any(G - np.diag(np.diag(G))):
            raise ValueError("G_tx must be diagonal")
        G = np.diag(G)
    if G.shape != (N,):
        raise ValueError(f"G_tx diagonal must have {N} entries")
    return check_real_array(G, "G_tx")


def heisenberg_time_signal(X_ft, G_tx=None) -> np.ndarray:
    """Critically sampled time signal ``vec(G_tx @ F_N^H @ X_ft)``."""
    X_ft = check_complex_array(X_ft, "X_ft", ndim=2)
    g = _pulse_diagonal(G_tx, X_ft.shape[0])
    return vec(g[:, None] * np.fft.ifft(X_ft, axis=0, norm="ortho"))


@dataclass(frozen=True)
class WaveformMatrix:
    """Sampled transmit waveforms, one column per TX antenna.

    Keeps the windowed DD frames so that the continuous-time signals can be
    re-evaluated at arbitrary instants.
    """

    S: np.ndarray
    g_tx: np.ndarray
    X_dd_windowed: np.ndarray
    params: OtfsParams

    @property
    def n_tx(self) -> int:
        return self.S.shape[1]

    def gram(self) -> np.ndarray:
        return self.S.conj().T @ self.S

    def continuous(self, t, pulse="rect", cp=True) -> np.ndarray:
        """Evaluate ``s_CP,i(t)`` (or ``s_i(t)`` if ``cp=False``) for all antennas.

        Returns an array of shape ``(len(t), n_tx)``.

        ``pulse="rect"`` evaluates the per-symbol Heisenberg sum with a
        rectangular pulse literally. ``pulse="bandlimited"`` evaluates the
        frame-periodic trigonometric polynomial (frequencies ``k delta_f / M``,
        ``k = 0..NM-1``) through the same samples, which is the continuous
        signal whose cyclic delays the DFT-domain model describes exactly.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        prm = self.params
        frame_len = prm.M * prm.T
        if cp:
            if np.any(t < -prm.T_cp - 1e-15 * frame_len) or np.any(t > frame_len):
                raise ValueError("t outside [-T_cp, M*T]")
            t = np.where(t < 0, t + frame_len, t)
        elif np.any(t < 0) or np.any(t > frame_len):
            raise ValueError("t outside [0, M*T]")
        if pulse == "rect":
            return np.stack(
                [_rect_signal(t, X, prm, self.g_tx) for X in self.X_dd_windowed], axis=1
            )
        if pulse == "bandlimited":
            return _bandlimited_signal(t, self.S, prm)
        raise ValueError(f"unknown pulse {pulse!r}")


def _rect_signal(t, X_dd, prm, g_tx):
    X_ft = isfft(X_dd)
    u = t / prm.T
    m = np.floor(u + 1e-9).astype(int)
    m = np.clip(m, 0, prm.M - 1)
    t_in = np.clip((u - m) * prm.T, 0.0, prm.T)
    n = np.arange(prm.N)
    phase = np.exp(2j * np.pi * prm.delta_f * np.outer(t_in, n))
    value = np.sum(phase * X_ft[:, m].T, axis=1) / np.sqrt(prm.N)
    if g_tx is not None and np.any(g_tx != 1.0):
        # rect only: sample-and-hold of the diagonal pulse samples
        idx = np.clip(np.floor(t_in / prm.sample_period + 1e-9).astype(int), 0, prm.N - 1)
        value = value * g_tx[idx]
    return value


def dirichlet_kernel(u, L) -> np.ndarray:
    """``(1/L) * sum_{k=0}^{L-1} exp(j 2 pi k u / L)`` in closed form."""
    u = np.asarray(u, dtype=float)
    wrapped = u / L - np.round(u / L)
    near = np.abs(wrapped) < 1e-12
    den = np.where(near, 1.0, L * np.sin(np.pi * u / L))
    val = np.exp(1j * np.pi * u * (L - 1) / L) * np.sin(np.pi * u) / den
    return np.where(near, 1.0 + 0j, val)


def _bandlimited_signal(t, S, prm):
    u = t / prm.sample_period
    ell = np.arange(prm.L)
    kernel = dirichlet_kernel(u[:, None] - ell[None, :], prm.L)
    return kernel @ S


def build_waveform_matrix(frame: DDFrame, windows: WindowSet, params: OtfsParams,
                          G_tx=None) -> WaveformMatrix:
    """Stack the per-antenna sampled OTFS waveforms into ``S`` (NM x n_tx)."""
    N, M = frame.shape
    if (N, M) != (params.N, params.M):
        raise ValueError("frame shape does not match params")
    g = _pulse_diagonal(G_tx, N)
    windowed = apply_windows(frame, windows)
    cols = [heisenberg_time_signal(isfft(Xi), g) for Xi in windowed]
    S = np.stack(cols, axis=1)
    S.setflags(write=False)
    windowed.setflags(write=False)
    return WaveformMatrix(S=S, g_tx=g, X_dd_windowed=windowed, params=params)


class OtfsModulator(TransformerMixin, BaseEstimator):
    """DD frame <-> sampled time signal, as a stateless transformer.

    ``transform`` maps a batch of ``N x M`` DD frames, shape ``(n, N, M)``, to
    time signals of shape ``(n, N*M)``. ``inverse_transform`` undoes it for a
    rectangular pulse.
    """

    def __init__(self, N=16, M=16):
        self.N = N
        self.M = M

    def fit(self, X=None, y=None):
        check_int(self.N, "N")
        check_int(self.M, "M")
        self.n_samples_ = self.N * self.M
        return self

    def transform(self, X):
        X = check_complex_array(X, "X", ndim=3, shape=(None, self.N, self.M))
        return np.stack([heisenberg_time_signal(isfft(x)) for x in X])

    def inverse_transform(self, s):
        s = check_complex_array(s, "s", ndim=2, shape=(None, self.N * self.M))
        return np.stack([sfft(np.fft.fft(unvec(x, self.N, self.M), axis=0, norm="ortho"))
                         for x in s])
