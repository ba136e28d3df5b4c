"""Classical AWGN channel ``Y = t X + Z`` between the reconciliation inputs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidInputError, InvalidParameterError
from .randsrc import SeedSpec, _as_seed, gaussian_block


@dataclass(frozen=True)
class ChannelParams:
    """Gain ``t`` and noise variance ``sigma^2`` (SNU^2).

    ``snr`` is only meaningful when the signal variance it was derived from is
    known; :meth:`from_snr` records it.
    """

    noise_variance: float
    t: float = 1.0
    snr: float | None = None

    def __post_init__(self):
        if not (self.noise_variance > 0 and math.isfinite(self.noise_variance)):
            raise InvalidParameterError(f"noise_variance must be positive, got {self.noise_variance}")

    @classmethod
    def from_snr(cls, snr: float, signal_variance: float, t: float = 1.0) -> "ChannelParams":
        if snr <= 0:
            raise InvalidParameterError("snr must be positive")
        return cls(t * t * signal_variance / snr, t, snr)


def awgn_apply(x, params: ChannelParams, seed: SeedSpec | int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise InvalidInputError("empty input")
    z = gaussian_block(x.size, params.noise_variance, _as_seed(seed)).reshape(x.shape)
    return params.t * x + z


def estimate_snr(x, y, t: float = 1.0) -> float:
    """``t^2 Var(x) / Var(y - t x)``; ``inf`` for a noiseless pair."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise InvalidInputError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 1000:
        raise InvalidInputError("need at least 1000 samples to estimate the SNR")
    noise = np.var(y - t * x)
    if noise == 0.0:
        return math.inf
    return float(t * t * np.var(x) / noise)


class AWGNChannel(TransformerMixin, BaseEstimator):
    """Estimator facade over :func:`awgn_apply`.

    ``fit`` fixes the noise variance: either ``noise_variance`` directly or
    ``Var(X) / snr`` from the training data. ``transform`` adds fresh noise
    drawn from stream ``stream_id`` of ``seed``.
    """

    def __init__(self, snr=None, noise_variance=None, t=1.0, seed=0):
        self.snr = snr
        self.noise_variance = noise_variance
        self.t = t
        self.seed = seed

    def fit(self, X, y=None):
        if (self.snr is None) == (self.noise_variance is None):
            raise InvalidParameterError("give exactly one of snr and noise_variance")
        if self.snr is not None:
            self.params_ = ChannelParams.from_snr(self.snr, float(np.var(np.asarray(X, dtype=float))), self.t)
        else:
            self.params_ = ChannelParams(self.noise_variance, self.t)
        return self

    def transform(self, X, stream_id=0):
        check_is_fitted(self, "params_")
        return awgn_apply(X, self.params_, SeedSpec(self.seed, stream_id))
