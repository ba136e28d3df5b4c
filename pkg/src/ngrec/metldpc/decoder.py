"""Syndrome-constrained sum-product decoding, flooding and layered schedules.

Messages are LLRs (positive favours bit 0). Check node ``j`` enforces parity
``s_j``: its outgoing sign is multiplied by ``1 - 2 s_j``. Magnitudes use the
exact rule ``phi(sum phi(|q|))`` with ``phi(x) = -log tanh(x / 2)``; messages
are clamped to ``+-LLR_CLAMP``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numba as nb
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..exceptions import InvalidInputError, InvalidParameterError
from .matrix import SparseParityMatrix, syndrome

Schedule = Literal["flooding", "layered"]
LLR_CLAMP = 38.0
_PHI_SMALL = 1e-6


@dataclass(frozen=True)
class DecodeResult:
    converged: bool
    iterations: int
    decoded_bits: np.ndarray
    residual_syndrome_weight: int
    schedule: str


@nb.njit(cache=True, inline="always")
def _phi(x):
    # -log tanh(x/2) = log((1 + e^-x) / (1 - e^-x)); below 1e-6 the
    # cancellation in 1 - e^-x matters and log(2/x) is exact to double precision
    if x < _PHI_SMALL:
        return math.log(2.0 / max(x, 1e-300))
    if x > LLR_CLAMP:
        x = LLR_CLAMP
    t = math.exp(-x)
    return math.log((1.0 + t) / (1.0 - t))


@nb.njit(cache=True, inline="always")
def _clamp(x):
    if x > LLR_CLAMP:
        return LLR_CLAMP
    if x < -LLR_CLAMP:
        return -LLR_CLAMP
    return x


@nb.njit(cache=True, inline="always")
def _check_update(a, b, parity, q, r, tmp):
    """Fill ``r[a:b]`` from incoming ``q[a:b]``; ``tmp`` is scratch of the same span."""
    total = 0.0
    neg = parity
    for e in range(a, b):
        x = q[e]
        if x < 0.0:
            neg ^= 1
            x = -x
        f = _phi(x)
        tmp[e] = f
        total += f
    for e in range(a, b):
        mag = _phi(total - tmp[e])
        if mag > LLR_CLAMP:
            mag = LLR_CLAMP
        sgn = neg
        if q[e] < 0.0:
            sgn ^= 1
        r[e] = -mag if sgn else mag


@nb.njit(cache=True)
def _syndrome_matches(row_ptr, edge_col, bits, synd):
    weight = 0
    for i in range(row_ptr.size - 1):
        acc = 0
        for e in range(row_ptr[i], row_ptr[i + 1]):
            acc ^= bits[edge_col[e]]
        if acc != synd[i]:
            weight += 1
    return weight


@nb.njit(cache=True)
def _decode_flooding(row_ptr, edge_col, col_ptr, col_edges, llr, synd, max_iter):
    m = row_ptr.size - 1
    n = llr.size
    ne = edge_col.size
    q = np.empty(ne)
    r = np.zeros(ne)
    tmp = np.empty(ne)
    post = np.empty(n)
    bits = np.zeros(n, dtype=np.uint8)
    for e in range(ne):
        q[e] = _clamp(llr[edge_col[e]])
    weight = -1
    it = 0
    while it < max_iter:
        it += 1
        for i in range(m):
            _check_update(row_ptr[i], row_ptr[i + 1], synd[i], q, r, tmp)
        for v in range(n):
            total = llr[v]
            for k in range(col_ptr[v], col_ptr[v + 1]):
                total += r[col_edges[k]]
            post[v] = total
            bits[v] = 1 if total < 0.0 else 0
            for k in range(col_ptr[v], col_ptr[v + 1]):
                e = col_edges[k]
                q[e] = _clamp(total - r[e])
        weight = _syndrome_matches(row_ptr, edge_col, bits, synd)
        if weight == 0:
            break
    return bits, it, weight


@nb.njit(cache=True)
def _decode_layered(row_ptr, edge_col, layer_order, llr, synd, max_iter):
    n = llr.size
    ne = edge_col.size
    r = np.zeros(ne)
    post = llr.copy()
    bits = np.zeros(n, dtype=np.uint8)
    # per-row scratch kept small so it stays in cache
    max_deg = 0
    for i in range(row_ptr.size - 1):
        max_deg = max(max_deg, row_ptr[i + 1] - row_ptr[i])
    q = np.empty(max_deg)
    f = np.empty(max_deg)
    weight = -1
    it = 0
    while it < max_iter:
        it += 1
        for idx in range(layer_order.size):
            i = layer_order[idx]
            a = row_ptr[i]
            deg = row_ptr[i + 1] - a
            total = 0.0
            neg = synd[i]
            for j in range(deg):
                x = _clamp(post[edge_col[a + j]] - r[a + j])
                q[j] = x
                if x < 0.0:
                    neg ^= 1
                    x = -x
                f[j] = _phi(x)
                total += f[j]
            for j in range(deg):
                mag = _phi(total - f[j])
                if mag > LLR_CLAMP:
                    mag = LLR_CLAMP
                sgn = neg
                if q[j] < 0.0:
                    sgn ^= 1
                msg = -mag if sgn else mag
                r[a + j] = msg
                post[edge_col[a + j]] = q[j] + msg
        for v in range(n):
            bits[v] = 1 if post[v] < 0.0 else 0
        weight = _syndrome_matches(row_ptr, edge_col, bits, synd)
        if weight == 0:
            break
    return bits, it, weight


def _prepare(H: SparseParityMatrix, llrs, s, max_iter):
    llrs = np.ascontiguousarray(llrs, dtype=np.float64)
    s = np.ascontiguousarray(s, dtype=np.uint8)
    if llrs.shape != (H.n,):
        raise InvalidInputError(f"expected {H.n} LLRs, got shape {llrs.shape}")
    if s.shape != (H.m,):
        raise InvalidInputError(f"expected {H.m} syndrome bits, got shape {s.shape}")
    if int(max_iter) < 1:
        raise InvalidParameterError("max_iter must be at least 1")
    if np.isnan(llrs).any():
        raise InvalidInputError("NaN in LLRs")
    if H.punctured.any():
        llrs = llrs.copy()
        llrs[H.punctured] = 0.0
    return llrs, s, int(max_iter)


def decode_bp(H: SparseParityMatrix, llrs, s, max_iter: int = 150) -> DecodeResult:
    """Flooding sum-product decoding towards syndrome ``s``."""
    llrs, s, max_iter = _prepare(H, llrs, s, max_iter)
    bits, it, w = _decode_flooding(H.row_ptr, H.edge_col, H.col_ptr, H.col_edges, llrs, s, max_iter)
    return DecodeResult(w == 0, int(it), bits, int(w), "flooding")


def decode_lbp(H: SparseParityMatrix, llrs, s, max_iter: int = 150) -> DecodeResult:
    """Layered (serial-C) sum-product decoding towards syndrome ``s``.

    Rows are visited in ``H.layer_order``; each row reads the current
    posteriors and writes them back immediately.
    """
    llrs, s, max_iter = _prepare(H, llrs, s, max_iter)
    bits, it, w = _decode_layered(H.row_ptr, H.edge_col, H.layer_order, llrs, s, max_iter)
    return DecodeResult(w == 0, int(it), bits, int(w), "layered")


SCHEDULES = {"bp": decode_bp, "flooding": decode_bp, "lbp": decode_lbp, "layered": decode_lbp}


def decode(H, llrs, s, max_iter=150, schedule="lbp") -> DecodeResult:
    try:
        fn = SCHEDULES[schedule]
    except KeyError:
        raise InvalidParameterError(f"unknown schedule {schedule!r}") from None
    return fn(H, llrs, s, max_iter)


class SyndromeDecoder(BaseEstimator):
    """Estimator facade: ``fit`` binds a parity-check matrix, ``predict``
    returns the decoded word for ``(llrs, syndrome)``."""

    def __init__(self, schedule="lbp", max_iter=150):
        self.schedule = schedule
        self.max_iter = max_iter

    def fit(self, H, y=None):
        if not isinstance(H, SparseParityMatrix):
            H = SparseParityMatrix.from_dense(H)
        if self.schedule not in SCHEDULES:
            raise InvalidParameterError(f"unknown schedule {self.schedule!r}")
        self.H_ = H
        return self

    def decode(self, llrs, s) -> DecodeResult:
        check_is_fitted(self, "H_")
        return decode(self.H_, llrs, s, self.max_iter, self.schedule)

    def predict(self, llrs, s) -> np.ndarray:
        return self.decode(llrs, s).decoded_bits

    def syndrome(self, bits) -> np.ndarray:
        check_is_fitted(self, "H_")
        return syndrome(self.H_, bits)
