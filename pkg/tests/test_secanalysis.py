import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import comb

from ngrec.exceptions import InvalidParameterError, SuperCapacityError, UnphysicalStateError
from ngrec.postselect import PostselectParams, success_probability
from ngrec.secanalysis import (
    ProtocolParams,
    awgn_capacity,
    beta_for_snr,
    beta_snr_map,
    covariance_matrix,
    default_success_probability,
    distance_curve,
    entropy_g,
    holevo_bound,
    key_rate,
    max_distance,
    mutual_information,
    snr_for_beta,
    state_moments,
    symplectic_eigenvalues,
)


def test_capacity_values():
    assert awgn_capacity(0) == 0
    assert awgn_capacity(1) == 0.5
    assert awgn_capacity(0.1554) == pytest.approx(0.10417, abs=1e-4)
    with pytest.raises(InvalidParameterError):
        awgn_capacity(-0.1)


def test_beta_snr_table():
    assert abs(beta_snr_map(0.1, beta=0.96) - 0.1554) < 1e-4
    assert beta_snr_map(0.1, beta=0.93) == pytest.approx(0.1609, abs=5e-4)
    assert beta_snr_map(0.05, beta=0.935) == pytest.approx(0.0770, abs=1e-4)
    with pytest.raises(InvalidParameterError):
        beta_snr_map(0.1)
    with pytest.raises(InvalidParameterError):
        beta_snr_map(0.1, beta=0.9, snr=0.2)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.9), st.floats(0.05, 1.0))
def test_beta_roundtrip(rate, beta):
    assert beta_snr_map(rate, snr=beta_snr_map(rate, beta=beta)) == pytest.approx(beta, abs=1e-12)


def test_super_capacity_flagged():
    with pytest.raises(SuperCapacityError):
        beta_for_snr(0.1, 0.05)
    with pytest.raises(SuperCapacityError):
        snr_for_beta(0.1, 1.2)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 100), st.floats(1e-3, 10))
def test_capacity_increasing(a, b):
    assert awgn_capacity(a + b) > awgn_capacity(a)


def test_mutual_information_limits():
    assert mutual_information(ProtocolParams(epsilon=0.0)) == pytest.approx(0.5 * math.log2(21))
    assert mutual_information(ProtocolParams(V_A=1e-12)) == pytest.approx(0.0, abs=1e-9)


def _textbook_mutual_information(va, T, eps):
    chi = 1 / T - 1 + eps
    return 0.5 * math.log2((va + 1 + chi) / (1 + chi))


def test_mutual_information_textbook_formula():
    p = ProtocolParams(distance_km=10)
    assert mutual_information(p) == pytest.approx(_textbook_mutual_information(20, p.T_C, 0.01), rel=1e-12)


def _holevo_oracle(gamma):
    """S(E:B) from the full 4x4 matrix: generic symplectic spectra and a homodyne Schur complement."""
    def S(g):
        return sum(entropy_g(max(nu, 1.0)) for nu in symplectic_eigenvalues(g))

    A, C, B = gamma[:2, :2], gamma[:2, 2:], gamma[2:, 2:]
    X = np.diag([1.0, 0.0])
    cond = A - C @ np.linalg.pinv(X @ B @ X) @ C.T
    nu = math.sqrt(np.linalg.det(cond))
    return S(gamma) - entropy_g(nu)


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("d", [0.0, 20.0, 60.0])
def test_holevo_matches_generic_oracle(k, d):
    p = ProtocolParams(distance_km=d, k=k)
    assert holevo_bound(p) == pytest.approx(_holevo_oracle(covariance_matrix(p)), abs=1e-8)


def test_perfect_channel_leaks_nothing():
    assert holevo_bound(ProtocolParams(epsilon=0.0)) == pytest.approx(0.0, abs=1e-6)


def test_holevo_increases_with_excess_noise():
    vals = [holevo_bound(ProtocolParams(distance_km=20, epsilon=e)) for e in np.linspace(0, 0.2, 11)]
    assert np.all(np.diff(vals) > 0)


def test_entropy_function():
    assert entropy_g(1.0) == 0.0
    assert entropy_g(3.0) == pytest.approx(2 * math.log2(2) - 0.0)
    assert entropy_g(1 + 2e-13) > 0
    with pytest.raises(UnphysicalStateError):
        entropy_g(0.5)


def _fock_moments(va, T, k, cutoff=2000):
    """Covariance entries of the k-photon-subtracted TMSV from its Fock expansion."""
    V = va + 1
    lam2 = (V - 1) / (V + 1)
    n = np.arange(k, cutoff)
    logw = n * math.log(lam2) + np.log(comb(n, k)) + (n - k) * math.log(T)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    amp = np.sqrt(w)
    a = 1 + 2 * np.sum(w * n)
    b = 1 + 2 * np.sum(w * (n - k))
    ab = np.sum(amp[:-1] * amp[1:] * np.sqrt(n[1:] * (n[1:] - k)))
    return a, b, 2 * ab


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_state_moments_match_fock_oracle(k):
    p = ProtocolParams(k=k)
    a, b, c = state_moments(p)
    fa, fb, fc = _fock_moments(20.0, 0.8 if k else 1.0, k)
    assert (a, b, c) == pytest.approx((fa, fb, fc), rel=1e-9)


def test_gaussian_state_model_only_rescales():
    base = ProtocolParams(distance_km=15)
    g = key_rate(base).key_rate
    p1 = success_probability(PostselectParams(0.8, 20.0, 1))
    proxy = key_rate(replace(base, k=1, state_model="gaussian")).key_rate
    assert proxy == pytest.approx(p1 * g)


def test_key_rate_clamping():
    p = ProtocolParams(distance_km=5)
    assert key_rate(p, 0.0).key_rate == 0.0
    noisy = ProtocolParams(distance_km=100, epsilon=0.2)
    rep = key_rate(noisy)
    assert rep.beta * rep.i_ab < rep.holevo and rep.key_rate == 0.0
    rep = key_rate(p, 0.5)
    assert rep.key_rate == pytest.approx(0.5 * (rep.beta * rep.i_ab - rep.holevo))
    with pytest.raises(InvalidParameterError):
        key_rate(p, 1.5)


def test_default_success_probability():
    assert default_success_probability(ProtocolParams()) == 1.0
    assert default_success_probability(ProtocolParams(k=1)) == pytest.approx(
        success_probability(PostselectParams(0.8, 20.0, 1))
    )


def test_distance_curve_shape():
    d = np.arange(0, 201, 1.0)
    table = distance_curve(ProtocolParams(), [0, 1], d)
    assert list(table) == ["distance_km", "k0", "k1"]
    for col in ("k0", "k1"):
        assert np.all(np.diff(table[col]) <= 1e-15)
    assert table["k0"][0] > 0 and table["k0"][-1] == 0
    assert table["k1"][0] < table["k0"][0]
    assert max_distance(ProtocolParams(), 1) > max_distance(ProtocolParams(), 0)
    with pytest.raises(InvalidParameterError):
        distance_curve(ProtocolParams(), [0], [])


def test_lossless_point_is_maximal():
    table = distance_curve(ProtocolParams(epsilon=0.0), [0], [0, 1, 5])
    assert table["k0"][0] == table["k0"].max()


def test_heterodyne_variant_runs():
    p = ProtocolParams(detector="heterodyne", distance_km=10)
    assert mutual_information(p) > mutual_information(replace(p, detector="homodyne"))
    assert key_rate(p).key_rate >= 0


@pytest.mark.parametrize(
    "kwargs",
    [dict(V_A=-1), dict(distance_km=-1), dict(attenuation_db_per_km=0), dict(epsilon=-0.1),
     dict(beta=0), dict(beta=1.1), dict(detector="x"), dict(k=-1), dict(k=1, T_ps=1.0),
     dict(state_model="other")],
)
def test_protocol_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        ProtocolParams(**kwargs)
