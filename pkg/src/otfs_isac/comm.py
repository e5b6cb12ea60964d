"""Communication receiver: DD demodulation, LMMSE estimation and achievable rate.

Rates are in nats (natural logarithm).
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._validation import check_complex_array
from .frame import _pulse_diagonal, time_to_dd, unvec, vec


@dataclass(frozen=True)
class DDObservation:
    """Vectorized DD-domain samples at the communication receiver."""

    y_dd: np.ndarray
    sigma2: float

    def __post_init__(self):
        y = check_complex_array(self.y_dd, "y_dd", ndim=1)
        object.__setattr__(self, "y_dd", y)


def demodulate_dd(y_com, N, M, G_rx=None, sigma2=0.0, route="auto") -> DDObservation:
    """Wigner transform plus SFFT of the received time samples.

    ``route="general"`` computes ``F_N^H (F_N G_rx Y_com) F_M`` with
    ``Y_com`` the ``N x M`` reshaping of ``y_com``. ``route="identity"``
    computes ``(F_M kron I_N) y_com`` and is only valid for ``G_rx = I``.
    ``"auto"`` picks the identity route when ``G_rx`` is None or all ones.
    """
    y_com = check_complex_array(y_com, "y_com", ndim=1, shape=(N * M,))
    g = _pulse_diagonal(G_rx, N)
    identity = bool(np.all(g == 1.0))
    if route == "auto":
        route = "identity" if identity else "general"
    if route == "identity":
        if not identity:
            raise ValueError("identity route requires G_rx = I")
        return DDObservation(time_to_dd(y_com, N, M), sigma2)
    if route != "general":
        raise ValueError(f"unknown route {route!r}")
    Y = unvec(y_com, N, M)
    Y_ft = np.fft.fft(g[:, None] * Y, axis=0, norm="ortho")
    Y_dd = np.fft.fft(np.fft.ifft(Y_ft, axis=0, norm="ortho"), axis=1, norm="ortho")
    return DDObservation(vec(Y_dd), sigma2)


def _check_sigma2(sigma2):
    if not np.isfinite(sigma2) or sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")


def lmmse_estimate(obs: DDObservation, H_dd) -> np.ndarray:
    """``H^H (H H^H + sigma2 I)^{-1} y``."""
    _check_sigma2(obs.sigma2)
    H = check_complex_array(H_dd, "H_dd", ndim=2)
    n = H.shape[0]
    A = H @ H.conj().T + obs.sigma2 * np.eye(n)
    return H.conj().T @ linalg.solve(A, obs.y_dd, assume_a="pos")


def _information_matrix(H, sigma2):
    H = check_complex_array(H, "H_dd", ndim=2)
    _check_sigma2(sigma2)
    return np.eye(H.shape[1]) + (H.conj().T @ H) / sigma2


def lmmse_covariance(H_dd, sigma2) -> np.ndarray:
    """Error covariance ``(I + H^H H / sigma2)^{-1}``."""
    J = _information_matrix(H_dd, sigma2)
    R = linalg.cho_solve(linalg.cho_factor(J, lower=True), np.eye(J.shape[0]))
    return 0.5 * (R + R.conj().T)


def logdet_hpd(A) -> float:
    """``log det A`` for Hermitian positive-definite ``A`` via Cholesky."""
    c = linalg.cholesky(A, lower=True, check_finite=True)
    return float(2.0 * np.sum(np.log(np.real(np.diag(c)))))


def achievable_rate(R_lmmse) -> float:
    """``-log det R_lmmse`` in nats."""
    R = check_complex_array(R_lmmse, "R_lmmse", ndim=2)
    return -logdet_hpd(0.5 * (R + R.conj().T))


def rate_from_channel(H_dd, sigma2) -> float:
    """``log det (I + H^H H / sigma2)`` without forming the inverse."""
    return logdet_hpd(_information_matrix(H_dd, sigma2))


def nats_to_bits(x):
    return np.asarray(x) / np.log(2.0)
