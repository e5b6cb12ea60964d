import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otfs_isac.comm import (
    DDObservation,
    achievable_rate,
    demodulate_dd,
    lmmse_covariance,
    lmmse_estimate,
    logdet_hpd,
    nats_to_bits,
    rate_from_channel,
)
from otfs_isac.frame import dd_to_time, unvec, vec


def crandn(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2 ** 31 - 1))
def test_demodulation_inverts_modulation(N, M, seed):
    rng = np.random.default_rng(seed)
    x = crandn(rng, N * M)
    assert np.allclose(demodulate_dd(dd_to_time(x, N, M), N, M).y_dd, x, atol=1e-12)


def test_identity_and_general_routes_agree(rng):
    y = crandn(rng, 24)
    a = demodulate_dd(y, 6, 4, route="identity").y_dd
    b = demodulate_dd(y, 6, 4, route="general").y_dd
    assert np.allclose(a, b, atol=1e-12)


def test_general_route_with_pulse(rng):
    N, M = 4, 3
    g = rng.uniform(0.5, 1.5, N)
    y = crandn(rng, N * M)
    out = demodulate_dd(y, N, M, G_rx=g).y_dd
    ref = demodulate_dd(vec(g[:, None] * unvec(y, N, M)), N, M, route="identity").y_dd
    assert np.allclose(out, ref, atol=1e-12)
    with pytest.raises(ValueError):
        demodulate_dd(y, N, M, G_rx=g, route="identity")


def test_demodulation_shape_check():
    with pytest.raises(ValueError):
        demodulate_dd(np.ones(5), 2, 3)


def test_lmmse_identity_channel():
    y = np.array([1.0, 2.0, -1.0j])
    x = lmmse_estimate(DDObservation(y, 1.0), np.eye(3))
    assert np.allclose(x, y / 2)


def test_lmmse_requires_positive_noise():
    with pytest.raises(ValueError):
        lmmse_estimate(DDObservation(np.ones(2), 0.0), np.eye(2))
    with pytest.raises(ValueError):
        lmmse_covariance(np.eye(2), -1.0)


def test_lmmse_forms_agree(rng):
    H = crandn(rng, 6, 6)
    s2 = 0.3
    y = crandn(rng, 6)
    x1 = lmmse_estimate(DDObservation(y, s2), H)
    x2 = np.linalg.solve(H.conj().T @ H + s2 * np.eye(6), H.conj().T @ y)
    assert np.allclose(x1, x2, atol=1e-10)
    R = lmmse_covariance(H, s2)
    assert np.allclose(R, np.linalg.inv(np.eye(6) + H.conj().T @ H / s2), atol=1e-10)


def test_rate_of_zero_channel_is_zero():
    assert achievable_rate(lmmse_covariance(np.zeros((4, 4)), 1.0)) == pytest.approx(0.0, abs=1e-12)


def test_rate_identity_channel():
    # log det(I + I / sigma2) = L log(1 + 1 / sigma2)
    assert rate_from_channel(np.eye(5), 0.5) == pytest.approx(5 * np.log(3.0))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_rate_routes_agree(n, seed):
    rng = np.random.default_rng(seed)
    H = crandn(rng, n, n)
    r1 = achievable_rate(lmmse_covariance(H, 0.7))
    r2 = rate_from_channel(H, 0.7)
    assert r1 == pytest.approx(r2, rel=1e-9, abs=1e-9)
    assert r2 >= 0


def test_logdet_rejects_indefinite():
    with pytest.raises(np.linalg.LinAlgError):
        logdet_hpd(np.diag([1.0, -1.0]))


def test_nats_to_bits():
    assert nats_to_bits(np.log(8.0)) == pytest.approx(3.0)
