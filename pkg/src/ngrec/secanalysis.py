"""Asymptotic key rates for reverse reconciliation under collective attacks.

The k-photon postselected protocol is bounded from below by the Gaussian
state sharing the covariance matrix of the photon-subtracted two-mode
squeezed vacuum (TMSV). Subtracting ``k`` photons from the sent mode of a TMSV
with ``lambda^2 = (V - 1)/(V + 1)`` through a beam splitter of transmittance
``T`` leaves a negative-binomial photon-number distribution with
``mu = T lambda^2``, which gives the covariance entries

    a = 1 + 2k + 2(k + 1) mu / (1 - mu)     (Alice's mode)
    b = 1 + 2(k + 1) mu / (1 - mu)          (sent mode)
    c = 2(k + 1) sqrt(mu) / (1 - mu)

``k = 0`` is the unmodified Gaussian protocol (``mu = lambda^2``, a = b = V).
With ``state_model="gaussian"`` every ``k`` uses the Gaussian covariance and
only the ``P(k)`` weight distinguishes the curves.
The sent mode crosses a channel of transmittance ``T_C`` with excess noise
``epsilon`` referred to the channel input. Bob's detector is ideal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .exceptions import InvalidParameterError, SuperCapacityError, UnphysicalStateError
from .postselect import PostselectParams, success_probability

_SYMPLECTIC_TOL = 1e-9


@dataclass(frozen=True)
class ProtocolParams:
    V_A: float = 20.0
    distance_km: float = 0.0
    attenuation_db_per_km: float = 0.2
    epsilon: float = 0.01
    detector: Literal["homodyne", "heterodyne"] = "homodyne"
    beta: float = 0.95
    k: int = 0
    T_ps: float = 0.8
    state_model: Literal["subtracted", "gaussian"] = "subtracted"

    def __post_init__(self):
        if self.V_A < 0:
            raise InvalidParameterError("V_A must be non-negative")
        if self.distance_km < 0:
            raise InvalidParameterError("distance must be non-negative")
        if self.attenuation_db_per_km <= 0:
            raise InvalidParameterError("attenuation must be positive")
        if self.epsilon < 0:
            raise InvalidParameterError("excess noise must be non-negative")
        if not 0 < self.beta <= 1:
            raise InvalidParameterError("beta must lie in (0, 1]")
        if self.detector not in ("homodyne", "heterodyne"):
            raise InvalidParameterError(f"unknown detector {self.detector!r}")
        if self.k < 0 or int(self.k) != self.k:
            raise InvalidParameterError("k must be a non-negative integer")
        if self.k and not 0 < self.T_ps < 1:
            raise InvalidParameterError("T_ps must lie in (0, 1)")
        if self.state_model not in ("subtracted", "gaussian"):
            raise InvalidParameterError(f"unknown state model {self.state_model!r}")

    @property
    def T_C(self) -> float:
        return 10.0 ** (-self.attenuation_db_per_km * self.distance_km / 10.0)

    @property
    def V(self) -> float:
        return self.V_A + 1.0


@dataclass(frozen=True)
class KeyRateReport:
    i_ab: float
    holevo: float
    p_success: float
    key_rate: float
    beta: float = field(default=1.0)


def awgn_capacity(snr: float) -> float:
    if snr < 0:
        raise InvalidParameterError("snr must be non-negative")
    return 0.5 * math.log2(1.0 + snr)


def snr_for_beta(rate: float, beta: float) -> float:
    _check_rate(rate)
    if not 0 < beta <= 1:
        raise SuperCapacityError(f"beta must lie in (0, 1], got {beta}")
    return 2.0 ** (2.0 * rate / beta) - 1.0


def beta_for_snr(rate: float, snr: float) -> float:
    _check_rate(rate)
    if snr <= 0:
        raise InvalidParameterError("snr must be positive")
    beta = rate / awgn_capacity(snr)
    if beta > 1.0 + 1e-12:
        raise SuperCapacityError(f"rate {rate} exceeds capacity at snr {snr} (beta = {beta:.4f})")
    return min(beta, 1.0)


def beta_snr_map(rate: float, *, beta: float | None = None, snr: float | None = None) -> float:
    """Convert between efficiency and SNR for a code of the given rate."""
    if (beta is None) == (snr is None):
        raise InvalidParameterError("give exactly one of beta or snr")
    return snr_for_beta(rate, beta) if snr is None else beta_for_snr(rate, snr)


def _check_rate(rate):
    if not 0 < rate < 1:
        raise InvalidParameterError(f"rate must lie in (0, 1), got {rate}")


def entropy_g(nu: float) -> float:
    """Von Neumann entropy of a thermal mode with symplectic eigenvalue ``nu``."""
    if nu < 1.0 - _SYMPLECTIC_TOL:
        raise UnphysicalStateError(f"symplectic eigenvalue {nu} < 1")
    x = max((nu - 1.0) / 2.0, 0.0)
    if x < 1e-12:
        # (x+1)log(x+1) - x log x = x(1 - log x) + O(x^2)
        return 0.0 if x == 0 else x * (1.0 - math.log(x)) / math.log(2.0)
    return (x + 1.0) * math.log2(x + 1.0) - x * math.log2(x)


def state_moments(params: ProtocolParams) -> tuple[float, float, float]:
    """``(a, b, c)`` of the source state before the channel."""
    V = params.V
    if params.k == 0 or params.state_model == "gaussian":
        return V, V, math.sqrt(max(V * V - 1.0, 0.0))
    lam2 = (V - 1.0) / (V + 1.0)
    mu = params.T_ps * lam2
    k = params.k
    mean = (k + 1) * mu / (1.0 - mu)
    return 1.0 + 2 * k + 2 * mean, 1.0 + 2 * mean, 2 * (k + 1) * math.sqrt(mu) / (1.0 - mu)


def covariance_matrix(params: ProtocolParams) -> np.ndarray:
    """4x4 covariance matrix of Alice's mode and Bob's received mode."""
    a, b, c = state_moments(params)
    T = params.T_C
    chi_line = 1.0 / T - 1.0 + params.epsilon
    vb = T * (b + chi_line)
    cb = math.sqrt(T) * c
    z = np.diag([1.0, -1.0])
    return np.block([[a * np.eye(2), cb * z], [cb * z, vb * np.eye(2)]])


def symplectic_eigenvalues(gamma: np.ndarray) -> np.ndarray:
    """Symplectic spectrum via the eigenvalues of ``i Omega gamma``."""
    modes = gamma.shape[0] // 2
    omega = np.kron(np.eye(modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    ev = np.abs(np.linalg.eigvals(1j * omega @ gamma))
    return np.sort(ev)[::2]


def _two_mode_spectrum(a, vb, cb):
    delta = a * a + vb * vb - 2.0 * cb * cb
    det = (a * vb - cb * cb) ** 2
    root = math.sqrt(max(delta * delta - 4.0 * det, 0.0))
    return math.sqrt(max((delta + root) / 2.0, 0.0)), math.sqrt(max((delta - root) / 2.0, 0.0))


def _channel_terms(params):
    a, b, c = state_moments(params)
    T = params.T_C
    vb = T * (b + 1.0 / T - 1.0 + params.epsilon)
    cb = math.sqrt(T) * c
    return a, vb, cb


def mutual_information(params: ProtocolParams) -> float:
    """Alice (heterodyne-equivalent preparation) to Bob, in bits per use."""
    a, vb, cb = _channel_terms(params)
    vb_a = vb - cb * cb / (a + 1.0)
    if params.detector == "homodyne":
        return 0.5 * math.log2(vb / vb_a)
    return math.log2((vb + 1.0) / (vb_a + 1.0))


def holevo_bound(params: ProtocolParams) -> float:
    """``S(E:B) = S(AB) - S(A|B)`` for reverse reconciliation."""
    a, vb, cb = _channel_terms(params)
    nu1, nu2 = _two_mode_spectrum(a, vb, cb)
    if params.detector == "homodyne":
        nu3 = math.sqrt(max(a * (a - cb * cb / vb), 0.0))
    else:
        nu3 = a - cb * cb / (vb + 1.0)
    return entropy_g(nu1) + entropy_g(nu2) - entropy_g(nu3)


def default_success_probability(params: ProtocolParams) -> float:
    if params.k == 0:
        return 1.0
    return success_probability(PostselectParams(params.T_ps, params.V_A, params.k))


def key_rate(params: ProtocolParams, p_success: float | None = None) -> KeyRateReport:
    """``P(k) [beta I(A:B) - S(E:B)]`` clamped at zero."""
    p = default_success_probability(params) if p_success is None else float(p_success)
    if not 0 <= p <= 1:
        raise InvalidParameterError("p_success must lie in [0, 1]")
    i_ab = mutual_information(params)
    chi = holevo_bound(params)
    rate = max(0.0, p * (params.beta * i_ab - chi))
    return KeyRateReport(i_ab, chi, p, rate, params.beta)


def distance_curve(template: ProtocolParams, k_values, distances) -> dict[str, np.ndarray]:
    """Key rate per distance for each photon number in ``k_values``.

    Returns columns ``distance_km`` and ``k<k>`` (``k0`` is the Gaussian protocol).
    """
    distances = np.asarray(distances, dtype=float)
    if distances.size == 0:
        raise InvalidParameterError("distance grid is empty")
    table = {"distance_km": distances}
    for k in k_values:
        p = default_success_probability(replace(template, k=int(k)))
        table[f"k{int(k)}"] = np.array(
            [key_rate(replace(template, k=int(k), distance_km=float(d)), p).key_rate for d in distances]
        )
    return table


def max_distance(template: ProtocolParams, k: int, hi: float = 500.0, tol: float = 1e-3) -> float:
    """Largest distance with a strictly positive key rate (bisection)."""
    p = default_success_probability(replace(template, k=k))

    def positive(d):
        return key_rate(replace(template, k=k, distance_km=d), p).key_rate > 0

    if not positive(0.0):
        return 0.0
    lo = 0.0
    if positive(hi):
        return math.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if positive(mid) else (lo, mid)
    return lo
