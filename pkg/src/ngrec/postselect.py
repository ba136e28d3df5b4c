"""Virtual photon subtraction by non-Gaussian postselection.

Alice's raw quadratures ``(x, p)`` are i.i.d. ``Normal(0, V_A)`` in shot-noise
units. Subtracting ``k`` photons through a beam splitter of transmittance ``T``
is emulated classically by accepting a sample with the Poissonian filter

    P(k | x, p) = t**k * exp(-t) / k!,   t = (1 - T) * lambda_sq * |gamma|**2

where ``|gamma|**2 = (x**2 + p**2) / (4 * N0)`` is the squared coherent-state
amplitude of a sample whose vacuum quadrature variance is ``N0`` (``N0 = 1``
for shot-noise units). The per-SNU scale ``s = (1 - T) * lambda_sq / (4 * N0)``
is exposed as :attr:`PostselectParams.filter_scale`.

One-dimensional data following the postselected marginal ``f_k`` are
extracted from Gaussian data with acceptance-rejection sampling against the
envelope ``c_k * g(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import integrate, optimize, special
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidInputError, InvalidParameterError, NumericalError
from .randsrc import SeedSpec, _as_seed, gaussian_block, uniform_block

Mode = Literal["per-quadrature", "joint"]
MODES = ("per-quadrature", "joint")


@dataclass(frozen=True)
class PostselectParams:
    """Physical parameters of the virtual k-photon subtraction.

    ``V`` is the two-mode squeezed vacuum variance, taken as ``V_A + 1``.
    """

    T: float = 0.8
    V_A: float = 20.0
    k: int = 1
    vacuum_variance: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.T < 1.0:
            raise InvalidParameterError(f"T must lie in (0, 1), got {self.T}")
        if not (np.isfinite(self.V_A) and self.V_A > 0):
            raise InvalidParameterError(f"V_A must be positive, got {self.V_A}")
        if int(self.k) != self.k or self.k < 0:
            raise InvalidParameterError(f"k must be a non-negative integer, got {self.k}")
        if not self.vacuum_variance > 0:
            raise InvalidParameterError("vacuum_variance must be positive")
        object.__setattr__(self, "k", int(self.k))

    @property
    def V(self) -> float:
        return self.V_A + 1.0

    @property
    def lambda_sq(self) -> float:
        return (self.V - 1.0) / (self.V + 1.0)

    @property
    def filter_scale(self) -> float:
        return (1.0 - self.T) * self.lambda_sq / (4.0 * self.vacuum_variance)

    @property
    def amplitude_gain(self) -> float:
        """Factor ``sqrt(2 T lambda_sq)`` relating the raw amplitude to the prepared state."""
        return math.sqrt(2.0 * self.T * self.lambda_sq)

    @property
    def theta(self) -> float:
        """``1 / (2 s V_A)``: ``s (x^2 + p^2)`` is exponential with mean ``1 / theta``."""
        return 1.0 / (2.0 * self.filter_scale * self.V_A)


@dataclass
class QuadraturePairBlock:
    """Paired quadratures in SNU, optionally with Alice's selection result.

    ``accepted_mask`` has shape ``(n,)`` for joint selection and ``(n, 2)`` for
    per-quadrature selection (columns are x and p).
    """

    x: np.ndarray
    p: np.ndarray
    accepted_mask: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.x.shape != self.p.shape or self.x.ndim != 1:
            raise InvalidInputError("x and p must be 1-D arrays of equal length")
        if self.accepted_mask is not None:
            self.accepted_mask = np.asarray(self.accepted_mask, dtype=bool)
            if self.accepted_mask.shape[0] != self.x.shape[0]:
                raise InvalidInputError("accepted_mask length differs from x")

    def __len__(self):
        return self.x.shape[0]

    @classmethod
    def gaussian(cls, n: int, variance: float, seed: SeedSpec | int | None = None):
        seed = _as_seed(seed)
        return cls(gaussian_block(n, variance, seed.child(0)), gaussian_block(n, variance, seed.child(1)))

    def stream(self) -> np.ndarray:
        """Interleave to the 1-D stream ``x0, p0, x1, p1, ...``."""
        return np.column_stack([self.x, self.p]).ravel()

    def stream_mask(self) -> np.ndarray:
        """Selection mask aligned with :meth:`stream`."""
        if self.accepted_mask is None:
            return np.ones(2 * len(self), dtype=bool)
        if self.accepted_mask.ndim == 1:
            return np.repeat(self.accepted_mask, 2)
        return self.accepted_mask.ravel()

    def accepted(self) -> np.ndarray:
        return self.stream()[self.stream_mask()]


@dataclass(frozen=True)
class AcceptanceReport:
    n_in: int
    n_accepted: int
    efficiency: float
    c_used: float

    def as_dict(self) -> dict:
        return {
            "n_in": int(self.n_in),
            "n_accepted": int(self.n_accepted),
            "efficiency": float(self.efficiency),
            "c_used": float(self.c_used),
        }


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("non-finite quadrature value")


def filter_prob(params: PostselectParams, x, p):
    """Probability of subtracting exactly ``k`` photons given ``(x, p)``."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    _check_finite(x, p)
    t = params.filter_scale * (x * x + p * p)
    k = params.k
    if k == 0:
        out = np.exp(-t)
    else:
        with np.errstate(divide="ignore"):
            out = np.exp(k * np.log(t) - t - special.gammaln(k + 1))
    return out if out.ndim else float(out)


def gaussian_density(params: PostselectParams, x):
    """Raw per-quadrature density ``g = Normal(0, V_A)``."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x / params.V_A) / math.sqrt(2.0 * math.pi * params.V_A)


def success_probability(params: PostselectParams) -> float:
    """Closed-form ``P(k) = theta / (1 + theta)**(k + 1)``."""
    theta = params.theta
    return theta / (1.0 + theta) ** (params.k + 1)


def success_probability_mc(params: PostselectParams, n: int, seed=None) -> tuple[float, float]:
    """Monte Carlo estimate of ``P(k)`` and its standard error.

    Draws are processed in chunks to bound memory.
    """
    seed = _as_seed(seed)
    chunk = 1_000_000
    total = 0.0
    total_sq = 0.0
    done = 0
    i = 0
    while done < n:
        m = min(chunk, n - done)
        block = QuadraturePairBlock.gaussian(m, params.V_A, seed.child(i))
        w = filter_prob(params, block.x, block.p)
        total += w.sum()
        total_sq += (w * w).sum()
        done += m
        i += 1
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    return mean, math.sqrt(var / n)


def _filtered_weight_closed(params: PostselectParams, x):
    """``h_k(x) = E_p[filter(x, p)]`` via binomial expansion of ``(x^2 + p^2)^k``."""
    x = np.asarray(x, dtype=float)
    s, va, k = params.filter_scale, params.V_A, params.k
    q = 1.0 + 2.0 * s * va
    a = va / q
    x2 = x * x
    poly = np.zeros_like(x2)
    for j in range(k + 1):
        # E[p^(2j)] under Normal(0, a) is a^j (2j-1)!!
        moment = a**j * special.factorial2(2 * j - 1, exact=False) if j else 1.0
        poly = poly + special.comb(k, j) * x2 ** (k - j) * moment
    return s**k / math.factorial(k) * np.exp(-s * x2) / math.sqrt(q) * poly


def _filtered_weight_quad(params: PostselectParams, x: float) -> float:
    sd = math.sqrt(params.V_A)

    def integrand(p):
        return float(gaussian_density(params, p)) * filter_prob(params, x, p)

    # integrand is even in p
    val, err = integrate.quad(integrand, 0.0, 12.0 * sd, epsabs=1e-13, epsrel=1e-11, limit=200)
    if not np.isfinite(val) or err > 1e-9:
        raise NumericalError(
            "quadrature over p did not converge", {"x": x, "value": val, "abs_error": err}
        )
    return 2.0 * val


def acceptance_ratio(params: PostselectParams, x, method: str = "auto"):
    """``f_k(x) / g(x)``, computed without evaluating the Gaussian tails."""
    if method == "auto":
        method = "closed" if params.k <= 3 else "quad"
    if method == "closed":
        h = _filtered_weight_closed(params, x)
    elif method == "quad":
        xs = np.asarray(x, dtype=float)
        h = np.vectorize(lambda v: _filtered_weight_quad(params, v))(xs)
        h = h if np.ndim(h) else float(h)
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    return h / success_probability(params)


def marginal_density(params: PostselectParams, x, method: str = "auto"):
    """Postselected single-quadrature density ``f_k(x)``."""
    return gaussian_density(params, x) * acceptance_ratio(params, x, method)


def acceptance_constant(params: PostselectParams, method: str = "auto", grid_points: int = 100_001) -> float:
    """Smallest ``c`` with ``c * g(x) >= f_k(x)`` for every real ``x``.

    A coarse grid brackets the maximiser of ``f_k / g`` on ``[0, 8 sqrt(V_A)]``
    (the ratio is even), bounded Brent search refines it, and the result is
    checked against the grid.
    """
    hi = 8.0 * math.sqrt(params.V_A)
    grid = np.linspace(0.0, hi, 2001)
    ratio_grid = acceptance_ratio(params, grid, "closed" if method == "auto" else method)
    i = int(np.argmax(ratio_grid))
    lo_b, hi_b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(
        lambda v: -float(acceptance_ratio(params, v, method)),
        bounds=(lo_b, hi_b),
        method="bounded",
        options={"xatol": 1e-9},
    )
    if not res.success:
        raise NumericalError("maximisation of f_k/g failed", {"message": res.message})
    c = max(-res.fun, float(ratio_grid[i]))
    dense = np.linspace(0.0, hi, grid_points)
    dense_max = float(acceptance_ratio(params, dense, "closed" if method == "auto" else method).max())
    if dense_max > c * (1 + 1e-9):
        raise NumericalError("maximiser missed the global maximum", {"c": c, "grid_max": dense_max})
    return c


def reject_sample(
    params: PostselectParams,
    block: QuadraturePairBlock,
    seed: SeedSpec | int | None = None,
    mode: Mode = "per-quadrature",
    c: float | None = None,
) -> tuple[QuadraturePairBlock, AcceptanceReport]:
    """Acceptance-rejection postselection of a Gaussian block.

    per-quadrature: each coordinate is kept iff ``c * g(x) * xi <= f_k(x)``.
    joint: the pair is kept iff ``xi <= P(k|x,p) / max P(k|.)``.
    Ties are accepted.
    """
    n = len(block)
    if n == 0:
        raise InvalidInputError("empty block")
    _check_finite(block.x, block.p)
    seed = _as_seed(seed)
    if mode == "per-quadrature":
        if c is None:
            c = acceptance_constant(params)
        xi = uniform_block(2 * n, seed).reshape(n, 2)
        ratio = np.column_stack(
            [acceptance_ratio(params, block.x), acceptance_ratio(params, block.p)]
        )
        mask = c * xi <= ratio
        n_in = 2 * n
    elif mode == "joint":
        k = params.k
        peak = 1.0 if k == 0 else math.exp(k * math.log(k) - k - special.gammaln(k + 1))
        c = 1.0 / peak
        xi = uniform_block(n, seed)
        mask = xi <= filter_prob(params, block.x, block.p) * c
        n_in = n
    else:
        raise InvalidParameterError(f"mode must be one of {MODES}, got {mode!r}")
    n_acc = int(mask.sum())
    out = QuadraturePairBlock(block.x, block.p, mask)
    return out, AcceptanceReport(n_in, n_acc, n_acc / n_in, float(c))


class VirtualPhotonSubtraction(BaseEstimator):
    """Estimator wrapper around the postselection routines.

    ``fit`` derives the acceptance constant for the configured parameters and
    checks that the supplied data are compatible with them. ``select`` returns
    Alice's selection mask for a quadrature array of shape ``(n, 2)`` and
    ``fit_resample`` returns the surviving samples as a flat stream.

    Parameters
    ----------
    k : int
        Number of virtually subtracted photons.
    transmittance : float
        Beam splitter transmittance ``T`` of the emulated subtraction.
    modulation_variance : float
        ``V_A`` in shot-noise units.
    mode : {"per-quadrature", "joint"}
    seed : int
        Master seed; each call to ``select`` takes ``stream_id`` explicitly.
    """

    def __init__(self, k=1, transmittance=0.8, modulation_variance=20.0, mode="per-quadrature",
                 vacuum_variance=1.0, seed=0):
        self.k = k
        self.transmittance = transmittance
        self.modulation_variance = modulation_variance
        self.mode = mode
        self.vacuum_variance = vacuum_variance
        self.seed = seed

    def _params(self):
        return PostselectParams(self.transmittance, self.modulation_variance, self.k, self.vacuum_variance)

    def fit(self, X=None, y=None):
        if self.mode not in MODES:
            raise InvalidParameterError(f"mode must be one of {MODES}")
        self.params_ = self._params()
        if X is not None:
            X = _check_pairs(X)
            self.n_features_in_ = 2
        self.c_ = acceptance_constant(self.params_) if self.mode == "per-quadrature" else None
        self.success_probability_ = success_probability(self.params_)
        return self

    def select(self, X, stream_id=0):
        check_is_fitted(self, "params_")
        X = _check_pairs(X)
        block = QuadraturePairBlock(X[:, 0], X[:, 1])
        out, report = reject_sample(
            self.params_, block, SeedSpec(self.seed, stream_id), self.mode, self.c_
        )
        self.report_ = report
        return out.accepted_mask

    def fit_resample(self, X, stream_id=0):
        self.fit(X)
        mask = self.select(X, stream_id)
        block = QuadraturePairBlock(np.asarray(X)[:, 0], np.asarray(X)[:, 1], mask)
        return block.accepted()


def _check_pairs(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise InvalidInputError("expected an array of shape (n, 2) with columns (x, p)")
    if X.shape[0] == 0:
        raise InvalidInputError("empty block")
    _check_finite(X)
    return X
