"""ISAC transmit design: beamformer and DD-domain power allocation.

The design is decoupled in two stages. The TX beamformer ``beta`` maximizes
``beta^T (rho D_rad + (1 - rho) D_com) beta^*`` over the unit sphere, then the
DD amplitudes ``p = sqrt(q)`` are set by water-filling on the diagonal ``g``
of the DD correlation matrix ``G``.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_positive, check_probability, check_random_state, check_real_array
from .channel import ArrayGeometry, CommChannel, RadarScene, delay_doppler_shift
from .comm import logdet_hpd
from .frame import (
    DDFrame,
    OtfsParams,
    WindowSet,
    build_waveform_matrix,
    dd_to_time,
)


class DegenerateDesignWarning(UserWarning):
    """The weighted quadratic form is zero, so every unit beamformer is optimal."""


# --------------------------------------------------------------------------
# radar SNR and quadratic forms
# --------------------------------------------------------------------------

def _quadratic_form(paths, geometry: ArrayGeometry, sigma2):
    D = np.zeros((geometry.n_tx, geometry.n_tx), dtype=complex)
    for path in paths:
        a = geometry.a_tx(path.theta)
        D += abs(path.alpha) ** 2 * np.outer(a, a.conj())
    return D / sigma2


def build_quadratic_forms(scene: RadarScene, channel: CommChannel, sigma2,
                          geometry: ArrayGeometry):
    """``(D_rad, D_com)`` with ``D = (1/sigma2) sum_k |alpha_k|^2 a_T a_T^H``."""
    sigma2 = check_positive(sigma2, "sigma2")
    return (_quadratic_form(scene.targets, geometry, sigma2),
            _quadratic_form(channel.paths, geometry, sigma2))


def radar_snr(beta, scene: RadarScene, sigma2, geometry: ArrayGeometry) -> float:
    """``beta^T D_rad beta^*``; the DD amplitudes do not enter."""
    beta = np.asarray(beta, dtype=complex)
    D_rad = _quadratic_form(scene.targets, geometry, check_positive(sigma2, "sigma2"))
    return float(np.real(beta @ D_rad @ beta.conj()))


def radar_snr_monte_carlo(beta, p, scene: RadarScene, params: OtfsParams, sigma2,
                          geometry: ArrayGeometry, n_frames=200, order=64, seed=None) -> float:
    """Frame-averaged ``sum_k |alpha_k|^2 ||S a_T(theta_k)||^2 / (sigma2 NM)``.

    Uses track-mode windows ``W_i = beta_i p`` with random QAM frames. Agrees
    with :func:`radar_snr` when ``sum(p**2) = NM``.
    """
    rng = check_random_state(seed)
    windows = WindowSet.track(beta, p, params.N, params.M)
    total = 0.0
    for _ in range(n_frames):
        wf = build_waveform_matrix(DDFrame.random(params.N, params.M, order, rng), windows, params)
        for tgt in scene.targets:
            x = wf.S @ geometry.a_tx(tgt.theta)
            total += abs(tgt.alpha) ** 2 * np.vdot(x, x).real
    return float(total / (n_frames * sigma2 * params.L))


# --------------------------------------------------------------------------
# beamformer
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BeamformerSolution:
    beta: np.ndarray
    objective: float
    degenerate: bool = False


def _canonical_phase(v):
    nz = np.flatnonzero(np.abs(v) > 1e-12 * np.max(np.abs(v)))
    if nz.size:
        v = v * np.exp(-1j * np.angle(v[nz[0]]))
    return v


def solve_beamformer(D_rad, D_com, rho) -> BeamformerSolution:
    """Maximize ``beta^T D_rho beta^*`` subject to ``||beta|| = 1``.

    The maximizer is the conjugate of the dominant eigenvector of
    ``D_rho = rho D_rad + (1 - rho) D_com``. The eigenvector is normalized so
    its first nonzero entry is real and positive before conjugation. If
    ``D_rho = 0`` the first standard basis vector is returned with
    ``degenerate=True`` and a :class:`DegenerateDesignWarning`.
    """
    rho = check_probability(rho, "rho", open_interval=False)
    D = rho * np.asarray(D_rad, dtype=complex) + (1.0 - rho) * np.asarray(D_com, dtype=complex)
    D = 0.5 * (D + D.conj().T)
    n = D.shape[0]
    scale = np.max(np.abs(D)) if D.size else 0.0
    if scale == 0.0:
        warnings.warn("D_rho is zero; returning the first basis vector",
                      DegenerateDesignWarning, stacklevel=2)
        beta = np.zeros(n, dtype=complex)
        beta[0] = 1.0
        return BeamformerSolution(beta, 0.0, True)
    w, V = np.linalg.eigh(D)
    v = _canonical_phase(V[:, -1])
    beta = np.conj(v)
    return BeamformerSolution(beta, float(np.real(beta @ D @ beta.conj())), False)


def beampattern(beta, theta_axis, geometry: ArrayGeometry) -> np.ndarray:
    """``|beta^T a_T(theta)|^2`` over ``theta_axis``."""
    return np.abs(np.asarray(beta) @ geometry.a_tx_matrix(theta_axis)) ** 2


# --------------------------------------------------------------------------
# DD correlation matrix
# --------------------------------------------------------------------------

def _path_weights(beta, channel: CommChannel, geometry: ArrayGeometry):
    beta = np.asarray(beta, dtype=complex)
    return np.array([p.alpha * (beta @ geometry.a_tx(p.theta)) for p in channel.paths],
                    dtype=complex)


def apply_HT_V(beta, channel: CommChannel, params: OtfsParams, geometry: ArrayGeometry, X):
    """``H_T (F_M^H kron I_N) X`` for a block of DD-domain columns ``X``."""
    h = _path_weights(beta, channel, geometry)
    X_t = dd_to_time(X, params.N, params.M)
    out = np.zeros_like(X_t)
    for hk, path in zip(h, channel.paths):
        if hk != 0:
            out += hk * delay_doppler_shift(X_t, path.tau, path.nu, params)
    return out


def build_G(beta, channel: CommChannel, params: OtfsParams, sigma2,
            geometry: ArrayGeometry) -> np.ndarray:
    """Dense ``G = (1/sigma2) V^H H_T^H H_T V`` with ``V = F_M^H kron I_N``."""
    if np.linalg.norm(beta) == 0:
        raise ValueError("beta must be nonzero")
    sigma2 = check_positive(sigma2, "sigma2")
    if params.L > 4096:
        raise ValueError("dense G is limited to NM <= 4096; use g_diagonal")
    HV = apply_HT_V(beta, channel, params, geometry, np.eye(params.L))
    G = HV.conj().T @ HV / sigma2
    return 0.5 * (G + G.conj().T)


class ChannelGram:
    """Cached pieces of ``G`` for repeated designs on one channel.

    Paths are grouped by angle so that ``H_T V = sum_g (beta^T a_T(theta_g)) M_g``
    with beta-independent ``M_g``. The cross products ``M_g2^H M_g1`` are
    stored, after which ``G(beta)`` costs only a weighted sum.
    """

    def __init__(self, channel: CommChannel, params: OtfsParams, sigma2,
                 geometry: ArrayGeometry):
        if params.L > 4096:
            raise ValueError("dense G is limited to NM <= 4096")
        self.sigma2 = check_positive(sigma2, "sigma2")
        self.geometry = geometry
        thetas = sorted({p.theta for p in channel.paths})
        self.thetas = np.array(thetas)
        V = dd_to_time(np.eye(params.L), params.N, params.M)
        blocks = []
        for th in thetas:
            M = np.zeros((params.L, params.L), dtype=complex)
            for path in channel.paths:
                if path.theta == th:
                    M += path.alpha * delay_doppler_shift(V, path.tau, path.nu, params)
            blocks.append(M)
        n = len(blocks)
        self.cross = [[blocks[i].conj().T @ blocks[j] for j in range(n)] for i in range(n)]

    def G(self, beta) -> np.ndarray:
        w = np.asarray(beta, dtype=complex) @ self.geometry.a_tx_matrix(self.thetas)
        n = w.size
        G = sum(np.conj(w[i]) * w[j] * self.cross[i][j] for i in range(n) for j in range(n))
        G = G / self.sigma2
        return 0.5 * (G + G.conj().T)


def g_diagonal(beta, channel: CommChannel, params: OtfsParams, sigma2,
               geometry: ArrayGeometry, chunk=256) -> np.ndarray:
    """Diagonal of ``G`` by applying ``H_T V`` to blocks of DD basis vectors."""
    sigma2 = check_positive(sigma2, "sigma2")
    L = params.L
    g = np.empty(L)
    for start in range(0, L, chunk):
        cols = np.arange(start, min(start + chunk, L))
        E = np.zeros((L, cols.size), dtype=complex)
        E[cols, np.arange(cols.size)] = 1.0
        HV = apply_HT_V(beta, channel, params, geometry, E)
        g[cols] = np.sum(np.abs(HV) ** 2, axis=0) / sigma2
    return g


def lmmse_cov_from_pG(p, G) -> np.ndarray:
    """``(I + (p p^T) * G)^{-1}``."""
    p = check_real_array(p, "p", ndim=1, nonnegative=True)
    A = np.eye(p.size) + np.outer(p, p) * G
    R = np.linalg.inv(A)
    return 0.5 * (R + R.conj().T)


def exact_rate(p, G) -> float:
    """``-log det R_LMMSE = log det (I + (p p^T) * G)`` in nats, via Cholesky."""
    p = check_real_array(p, "p", ndim=1, nonnegative=True)
    A = np.eye(p.size) + np.outer(p, p) * G
    return logdet_hpd(0.5 * (A + A.conj().T))


def approx_rate(q, g=None, beta=None, D_com=None) -> float:
    """Rate approximations in nats.

    With ``g`` this is ``sum log(1 + q_i g_i)``. With ``beta`` and ``D_com``
    every ``g_i`` is replaced by ``beta^T D_com beta^*``.
    """
    q = check_real_array(q, "q", ndim=1, nonnegative=True)
    if g is None:
        if beta is None or D_com is None:
            raise ValueError("pass g, or beta together with D_com")
        beta = np.asarray(beta, dtype=complex)
        g = np.full(q.size, np.real(beta @ D_com @ beta.conj()))
    g = check_real_array(g, "g", ndim=1, nonnegative=True)
    return float(np.sum(np.log1p(q * g)))


# --------------------------------------------------------------------------
# water-filling
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WaterfillResult:
    q: np.ndarray
    mu: float


def waterfill(g, budget) -> WaterfillResult:
    """Maximize ``sum log(1 + q_i g_i)`` subject to ``sum q = budget``, ``q >= 0``.

    Exact sort-based water level: ``q_i = max(0, mu - 1/g_i)``.
    """
    g = check_real_array(g, "g", ndim=1, nonnegative=True)
    budget = check_positive(budget, "budget")
    if not np.any(g > 0):
        raise ValueError("all channel gains are zero; water-filling is degenerate")
    with np.errstate(divide="ignore", over="ignore"):
        active = np.flatnonzero(np.isfinite(1.0 / np.where(g > 0, g, 0.0)))
    if active.size == 0:
        # every gain is subnormal: the strongest bin takes the whole budget
        q = np.zeros_like(g)
        q[np.argmax(g)] = budget
        return WaterfillResult(q, np.inf)
    # work with floors 1/g_i relative to the lowest one to avoid cancellation
    inv_active = 1.0 / g[active]
    ref = inv_active.min()
    off = np.sort(inv_active - ref)
    k = np.arange(1, off.size + 1)
    # budget needed before the k-th floor is reached; nondecreasing in k
    need = np.concatenate(([0.0], np.cumsum(k[:-1] * np.diff(off))))
    n = int(np.count_nonzero(budget > need))
    level = (budget + off[:n].sum()) / n
    q = np.zeros_like(g)
    q[active] = np.maximum(0.0, level - (inv_active - ref))
    mu = float(level + ref)
    return WaterfillResult(q, mu)


# --------------------------------------------------------------------------
# Algorithm 2
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignResult:
    beta_opt: np.ndarray
    p_opt: np.ndarray
    snr_rad: float
    rate: float
    rate_approx: float
    objective: float
    g: np.ndarray
    rho: float


def run_algorithm2(scene: RadarScene, channel: CommChannel, rho, params: OtfsParams, sigma2,
                   geometry: Optional[ArrayGeometry] = None, budget=None,
                   exact=True, gram: Optional[ChannelGram] = None) -> DesignResult:
    """Two-stage ISAC design: beamformer, then DD water-filling.

    ``rate`` is the exact ``-log det R_LMMSE`` at the design point when
    ``exact`` (dense ``G``), otherwise the diagonal approximation. A
    :class:`ChannelGram` for ``channel`` may be passed to reuse work across
    several ``rho``.
    """
    geometry = geometry or ArrayGeometry.for_params(params)
    if len(channel) == 0:
        raise ValueError("the communication channel needs at least one path")
    budget = float(params.L if budget is None else budget)
    D_rad, D_com = build_quadratic_forms(scene, channel, sigma2, geometry)
    sol = solve_beamformer(D_rad, D_com, rho)
    if exact:
        G = gram.G(sol.beta) if gram is not None else build_G(sol.beta, channel, params,
                                                              sigma2, geometry)
        g = np.real(np.diag(G)).copy()
    else:
        g = g_diagonal(sol.beta, channel, params, sigma2, geometry)
    wf = waterfill(np.maximum(g, 0.0), budget)
    p = np.sqrt(wf.q)
    approx = approx_rate(wf.q, g=np.maximum(g, 0.0))
    rate = exact_rate(p, G) if exact else approx
    return DesignResult(sol.beta, p, radar_snr(sol.beta, scene, sigma2, geometry), rate,
                        approx, sol.objective, g, float(rho))


class IsacDesigner(BaseEstimator):
    """Estimator wrapper around the two-stage ISAC design.

    Parameters
    ----------
    rho : float
        Radar weight in ``[0, 1]``.
    sigma2 : float
        Noise variance at both receivers.
    exact_rate : bool
        Report ``-log det R_LMMSE`` (dense ``G``) instead of the diagonal
        approximation.
    """

    def __init__(self, rho=0.5, sigma2=1.0, tx_spacing=0.5, exact_rate=True):
        self.rho = rho
        self.sigma2 = sigma2
        self.tx_spacing = tx_spacing
        self.exact_rate = exact_rate

    def fit(self, X: RadarScene, y: CommChannel, params: OtfsParams):
        """Design for radar scene ``X`` and communication channel ``y``."""
        self.params_ = params
        self.geometry_ = ArrayGeometry(params.n_tx, params.n_rx, self.tx_spacing)
        res = run_algorithm2(X, y, self.rho, params, self.sigma2, self.geometry_,
                             exact=self.exact_rate)
        self.result_ = res
        self.beta_opt_ = res.beta_opt
        self.p_opt_ = res.p_opt
        self.snr_rad_ = res.snr_rad
        self.rate_ = res.rate
        return self

    def beampattern(self, theta_axis) -> np.ndarray:
        return beampattern(self.beta_opt_, theta_axis, self.geometry_)

    def windows(self) -> WindowSet:
        return WindowSet.track(self.beta_opt_, self.p_opt_, self.params_.N, self.params_.M)

    def transform(self, frame: DDFrame):
        """Sampled ISAC waveform of ``frame`` under the designed windows."""
        return build_waveform_matrix(frame, self.windows(), self.params_)
