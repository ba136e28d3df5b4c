import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from ngrec import mdr
from ngrec.exceptions import DegenerateBlockError, InvalidInputError, InvalidParameterError


def _units(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _signs(rng, n, d):
    return mdr.bits_to_signs(rng.integers(0, 2, (n, d)), d)


def test_normalize_examples():
    unit, norm = mdr.normalize([3.0, 4.0])
    assert np.allclose(unit, [0.6, 0.8]) and norm == 5.0
    e = np.eye(8)[2]
    unit, norm = mdr.normalize(e)
    assert np.array_equal(unit, e) and norm == 1.0
    with pytest.raises(DegenerateBlockError):
        mdr.normalize(np.zeros(4))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=8, max_size=8).filter(lambda v: np.linalg.norm(v) > 1e-6))
def test_normalize_reconstructs(values):
    v = np.array(values)
    unit, norm = mdr.normalize(v)
    assert np.allclose(unit * norm, v, rtol=1e-12, atol=1e-12 * norm)


def test_normalize_blocks_drops_partial_and_flags_degenerate():
    data = np.concatenate([np.zeros(4), np.ones(4), [1.0, 2.0]])
    units, norms, keep = mdr.normalize_blocks(data, 4)
    assert units.shape == (2, 4)
    assert list(keep) == [False, True]
    assert norms[1] == pytest.approx(2.0)


@pytest.mark.parametrize("d", mdr.DIMENSIONS)
def test_algebra_is_normed(d):
    rng = np.random.default_rng(d)
    a, b = rng.standard_normal((2, 500, d))
    prod = mdr.multiply(a, b)
    assert np.allclose(np.linalg.norm(prod, axis=1), np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))


@pytest.mark.parametrize("d", mdr.DIMENSIONS)
def test_mapping_exact_and_orthogonal(d):
    rng = np.random.default_rng(10 + d)
    y, u = _units(rng, 2000, d), _signs(rng, 2000, d)
    coeffs = mdr.build_mapping(y, u)
    assert np.allclose(np.linalg.norm(coeffs.alpha, axis=1), 1.0, atol=1e-10)
    assert np.max(np.abs(mdr.apply_mapping(coeffs, y) - u)) < 1e-10
    for i in range(5):
        M = mdr.MappingCoeffs(coeffs.alpha[i]).matrix()
        assert np.max(np.abs(M.T @ M - np.eye(d))) < 1e-10
        assert np.max(np.abs(M @ y[i] - u[i])) < 1e-10


def test_fixed_point_and_reflection():
    rng = np.random.default_rng(0)
    u = _signs(rng, 1, 8)[0]
    assert np.allclose(mdr.apply_mapping(mdr.build_mapping(u, u), u), u, atol=1e-12)
    assert np.allclose(mdr.build_mapping([1.0], [1.0]).alpha, [1.0])
    m = mdr.build_mapping([-1.0], [1.0])
    assert np.allclose(m.matrix(), [[-1.0]])


def test_isometry_and_small_rotation():
    rng = np.random.default_rng(3)
    y, u = _units(rng, 1000, 8), _signs(rng, 1000, 8)
    coeffs = mdr.build_mapping(y, u)
    a, b = rng.standard_normal((2, 1000, 8))
    lhs = np.linalg.norm(mdr.multiply(coeffs.alpha, a) - mdr.multiply(coeffs.alpha, b), axis=1)
    assert np.allclose(lhs, np.linalg.norm(a - b, axis=1), atol=1e-10)
    eps = 1e-4
    x = y + eps * _units(rng, 1000, 8)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    v = mdr.apply_mapping(coeffs, x)
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-10)
    assert np.allclose(np.linalg.norm(v - u, axis=1), np.linalg.norm(x - y, axis=1), atol=1e-10)


def test_mapping_input_validation():
    with pytest.raises(InvalidParameterError):
        mdr.build_mapping(np.ones(3) / math.sqrt(3), np.ones(3) / math.sqrt(3))
    with pytest.raises(InvalidInputError):
        mdr.build_mapping(np.ones(4), np.ones(4) / 2)
    with pytest.raises(InvalidInputError):
        mdr.apply_mapping(mdr.MappingCoeffs(np.eye(4)[0]), np.eye(8)[0])


def test_llr_formula_and_limits():
    v = np.array([0.5, -0.5, 0.5, -0.5])
    llr = mdr.compute_llrs(v, 2.0, 3.0, 1.5, 4)
    assert np.allclose(llr, 2 * 2 * 3 * v / (2 * 1.5))
    assert np.allclose(mdr.compute_llrs(v, 2.0, 3.0, 1e12, 4), 0.0, atol=1e-10)
    mags = [mdr.compute_llrs(v, 2.0, 3.0, s2, 4)[0] for s2 in (4.0, 1.0, 0.25)]
    assert mags[0] < mags[1] < mags[2]
    with pytest.raises(InvalidParameterError):
        mdr.compute_llrs(v, 1.0, 1.0, 0.0)


def _frame(rng, blocks, d, snr, va=20.0):
    s2 = va / snr
    x = rng.normal(0, math.sqrt(va), blocks * d)
    y = x + rng.normal(0, math.sqrt(s2), x.size)
    u = rng.integers(0, 2, x.size).astype(np.uint8)
    return x, y, u, s2


def test_noiseless_rotation_recovers_u():
    rng = np.random.default_rng(4)
    x, _, u, _ = _frame(rng, 1000, 8, 1.0)
    side = mdr.bob_map(x, u, 8)
    llr = mdr.alice_llrs(x, side, 1e-6)
    assert np.array_equal(llr < 0, u == 1)


def test_side_information_roundtrip():
    rng = np.random.default_rng(5)
    x, y, u, _ = _frame(rng, 50, 8, 0.5)
    side = mdr.bob_map(y, u, 8)
    raw = side.to_bytes()
    assert len(raw) == 50 * 10 * 8
    back = mdr.SideInformation.from_bytes(raw, 8)
    assert np.array_equal(back.alpha, side.alpha) and np.array_equal(back.y_norm, side.y_norm)
    assert np.frombuffer(raw[:8], "<f8")[0] == 8.0
    with pytest.raises(InvalidInputError):
        mdr.SideInformation.from_bytes(raw, 4)


def _virtual_channel_ber(d, snr, va=20.0):
    """Exact BER of sign(v_i): given y, x = a y + e with e isotropic and independent of y."""
    s2 = va / snr
    a = va / (va + s2)
    tau = math.sqrt(va * s2 / (va + s2))
    chi = stats.chi(d, scale=math.sqrt(va + s2))
    f = lambda r: chi.pdf(r) * stats.norm.cdf(-a * r / (math.sqrt(d) * tau))
    return integrate.quad(f, 0, np.inf, limit=200)[0]


@pytest.mark.parametrize("d", [1, 8])
def test_bit_error_rate_matches_virtual_channel(d):
    rng = np.random.default_rng(6)
    blocks = 10**5 // d * d
    x, y, u, s2 = _frame(rng, blocks, d, 0.1554)
    llr = mdr.alice_llrs(x, mdr.bob_map(y, u, d), s2)
    errors = np.mean((llr < 0) != (u == 1))
    p = _virtual_channel_ber(d, 0.1554)
    assert abs(errors - p) < 3 * math.sqrt(p * (1 - p) / u.size)


def test_noise_is_isotropic():
    rng = np.random.default_rng(7)
    d = 8
    x, y, u, s2 = _frame(rng, 10**5, d, 0.1554)
    side = mdr.bob_map(y, u, d)
    xu, xn, _ = mdr.normalize_blocks(x, d)
    v = mdr.multiply(side.alpha, xu)
    w = side.y_norm[:, None] * mdr.bits_to_signs(u.reshape(-1, d), d) - xn[:, None] * v
    cov = np.cov(w.T) / s2
    assert np.all(np.abs(np.diag(cov) - 1.0) < 0.05)
    assert np.max(np.abs(cov - np.diag(np.diag(cov)))) < 0.05


def test_bob_map_rejects_degenerate_and_mismatch():
    with pytest.raises(DegenerateBlockError):
        mdr.bob_map(np.zeros(8), np.zeros(8, dtype=np.uint8), 8)
    with pytest.raises(InvalidInputError):
        mdr.bob_map(np.ones(16), np.zeros(8, dtype=np.uint8), 8)


def test_reconciler_estimator():
    rng = np.random.default_rng(12)
    x = rng.normal(0, math.sqrt(20), 8000)
    y = x + rng.normal(0, 1.0, x.size)
    u = rng.integers(0, 2, x.size).astype(np.uint8)
    est = mdr.MultidimensionalReconciler(d=8, noise_variance=1.0).fit(y, u)
    llrs = est.transform(x)
    assert llrs.shape == (x.size,)
    assert np.mean(est.predict(x) != u) < 0.01
    assert est.get_params() == {"d": 8, "noise_variance": 1.0}
    with pytest.raises(InvalidParameterError):
        mdr.MultidimensionalReconciler(d=3).fit(y, u)
