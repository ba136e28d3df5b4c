"""Multidimensional reconciliation over the normed division algebras.

Bob normalises a ``d``-dimensional block ``y`` and draws a uniform sign vector
``u`` (entries ``+-1/sqrt(d)``). The orthogonal map ``M`` with ``M y' = u`` is
left multiplication by ``alpha = u * conj(y')`` in the reals, complexes,
quaternions or octonions (``d`` = 1, 2, 4, 8); alternativity gives
``(u conj(y')) y' = u`` even without associativity. Bob publishes ``alpha`` and
``|y|``; Alice computes ``v = alpha * x'`` and soft information for ``u``.

Bit convention: bit 0 maps to ``+1/sqrt(d)``, bit 1 to ``-1/sqrt(d)``; a
positive LLR favours bit 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateBlockError, InvalidInputError, InvalidParameterError

log = logging.getLogger(__name__)

DIMENSIONS = (1, 2, 4, 8)
MIN_NORM = 1e-9


def _cd_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cayley-Dickson product ``(p, q)(r, s) = (pr - conj(s) q, s p + q conj(r))``."""
    d = a.shape[-1]
    if d == 1:
        return a * b
    h = d // 2
    p, q = a[..., :h], a[..., h:]
    r, s = b[..., :h], b[..., h:]
    return np.concatenate(
        [_cd_mul(p, r) - _cd_mul(conj(s), q), _cd_mul(s, p) + _cd_mul(q, conj(r))], axis=-1
    )


def conj(a: np.ndarray) -> np.ndarray:
    out = -np.asarray(a, dtype=float)
    out[..., 0] *= -1
    return out


@lru_cache(maxsize=None)
def structure_constants(d: int) -> np.ndarray:
    """``C[i, j, k]`` with ``e_i e_j = sum_k C[i, j, k] e_k``."""
    _check_dim(d)
    eye = np.eye(d)
    c = _cd_mul(eye[:, None, :].repeat(d, 1), eye[None, :, :].repeat(d, 0))
    c.setflags(write=False)
    return c


def multiply(a, b) -> np.ndarray:
    """Division-algebra product, broadcast over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.einsum("...i,...j,ijk->...k", a, b, structure_constants(a.shape[-1]), optimize=True)


def _check_dim(d):
    if d not in DIMENSIONS:
        raise InvalidParameterError(f"dimension must be one of {DIMENSIONS}, got {d}")


@dataclass(frozen=True)
class MappingCoeffs:
    """Coefficients of ``M`` in the left-multiplication basis ``A_i = L(e_i)``."""

    alpha: np.ndarray

    @property
    def d(self) -> int:
        return self.alpha.shape[-1]

    def matrix(self) -> np.ndarray:
        """Dense ``d x d`` matrix ``sum_i alpha_i A_i``."""
        basis = structure_constants(self.d)  # (A_i)[k, j] = C[i, j, k]
        return np.einsum("i,ijk->kj", self.alpha, basis)


@dataclass(frozen=True)
class MdrBlock:
    d: int
    y_unit: np.ndarray
    y_norm: float
    x_unit: np.ndarray
    x_norm: float
    u_bits: np.ndarray

    @property
    def u(self) -> np.ndarray:
        return bits_to_signs(self.u_bits, self.d)


def bits_to_signs(bits, d: int) -> np.ndarray:
    return (1.0 - 2.0 * np.asarray(bits, dtype=float)) / np.sqrt(d)


def normalize(block) -> tuple[np.ndarray, float]:
    block = np.asarray(block, dtype=float)
    norm = float(np.linalg.norm(block))
    if norm < MIN_NORM:
        raise DegenerateBlockError(f"block norm {norm:.3g} below {MIN_NORM}")
    return block / norm, norm


def normalize_blocks(data, d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split ``data`` into consecutive ``d``-blocks and normalise each one.

    Returns ``(units, norms, keep)``; a trailing partial block is dropped and
    degenerate blocks are flagged ``keep == False`` (their unit rows are zero).
    """
    _check_dim(d)
    data = np.asarray(data, dtype=float)
    nb = data.size // d
    blocks = data[: nb * d].reshape(nb, d)
    norms = np.linalg.norm(blocks, axis=1)
    keep = norms >= MIN_NORM
    if not keep.all():
        log.info("discarding %d degenerate blocks", int((~keep).sum()))
    units = np.zeros_like(blocks)
    units[keep] = blocks[keep] / norms[keep, None]
    return units, norms, keep


def _check_unit(v, name):
    if np.any(np.abs(np.linalg.norm(v, axis=-1) - 1.0) > 1e-9):
        raise InvalidInputError(f"{name} must have unit norm")


def build_mapping(y_unit, u) -> MappingCoeffs:
    """Coefficients ``alpha`` such that ``M(alpha) y_unit = u``."""
    y_unit = np.asarray(y_unit, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_dim(y_unit.shape[-1])
    if y_unit.shape != u.shape:
        raise InvalidInputError("y_unit and u differ in shape")
    _check_unit(y_unit, "y_unit")
    _check_unit(u, "u")
    return MappingCoeffs(multiply(u, conj(y_unit)))


def apply_mapping(coeffs: MappingCoeffs | np.ndarray, x_unit) -> np.ndarray:
    alpha = coeffs.alpha if isinstance(coeffs, MappingCoeffs) else np.asarray(coeffs, dtype=float)
    x_unit = np.asarray(x_unit, dtype=float)
    if alpha.shape != x_unit.shape:
        raise InvalidInputError(f"dimension mismatch: {alpha.shape} vs {x_unit.shape}")
    return multiply(alpha, x_unit)


def compute_llrs(v, x_norm, y_norm, sigma2: float, d: int | None = None) -> np.ndarray:
    """Per-bit LLRs of ``u`` given Alice's rotated block.

    With ``y = x + z`` and ``z ~ N(0, sigma2 I)``, the likelihood of ``u`` is
    ``exp(|y| |x| <u, v> / sigma2)``, hence ``llr_i = 2 |x| |y| v_i / (sqrt(d) sigma2)``.
    """
    if not sigma2 > 0:
        raise InvalidParameterError("sigma2 must be positive")
    v = np.asarray(v, dtype=float)
    d = v.shape[-1] if d is None else d
    scale = 2.0 * np.asarray(x_norm, dtype=float) * np.asarray(y_norm, dtype=float) / (np.sqrt(d) * sigma2)
    return v * np.expand_dims(scale, -1) if np.ndim(scale) else v * scale


@dataclass(frozen=True)
class SideInformation:
    """What Bob discloses per frame: mapping coefficients and his block norms."""

    alpha: np.ndarray  # (blocks, d)
    y_norm: np.ndarray  # (blocks,)

    @property
    def d(self) -> int:
        return self.alpha.shape[1]

    def to_bytes(self) -> bytes:
        d = np.full((self.alpha.shape[0], 1), self.d, dtype="<f8")
        rec = np.hstack([d, self.alpha.astype("<f8"), self.y_norm.astype("<f8")[:, None]])
        return rec.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes, d: int) -> "SideInformation":
        _check_dim(d)
        flat = np.frombuffer(raw, dtype="<f8")
        if flat.size % (d + 2):
            raise InvalidInputError(f"byte length {len(raw)} is not a whole number of d={d} records")
        rec = flat.reshape(-1, d + 2)
        if np.any(rec[:, 0] != d):
            raise InvalidInputError("record dimension field does not match")
        return cls(rec[:, 1 : d + 1].copy(), rec[:, d + 1].copy())


def bob_map(y, u_bits, d: int = 8) -> SideInformation:
    """Bob's side: normalise ``y`` blockwise and map each block onto ``u``."""
    units, norms, keep = normalize_blocks(y, d)
    if not keep.all():
        raise DegenerateBlockError("degenerate block in frame")
    u = bits_to_signs(np.asarray(u_bits).reshape(-1, d), d)
    if u.shape != units.shape:
        raise InvalidInputError("u_bits do not match the number of blocks")
    return SideInformation(multiply(u, conj(units)), norms)


def alice_llrs(x, side: SideInformation, sigma2: float) -> np.ndarray:
    """Alice's side: rotate her normalised blocks and return flat LLRs."""
    units, x_norms, keep = normalize_blocks(x, side.d)
    if units.shape[0] != side.alpha.shape[0]:
        raise InvalidInputError("block count differs from side information")
    v = multiply(side.alpha, units)
    return compute_llrs(v, x_norms, side.y_norm, sigma2, side.d).ravel()


class MultidimensionalReconciler(BaseEstimator):
    """Estimator facade for one reconciliation frame.

    ``fit(y, u_bits)`` plays Bob and stores the disclosed
    :class:`SideInformation`; ``transform(x)`` plays Alice and returns her
    per-bit LLRs; ``predict(x)`` gives the hard decisions.
    """

    def __init__(self, d=8, noise_variance=1.0):
        self.d = d
        self.noise_variance = noise_variance

    def fit(self, y, u_bits):
        _check_dim(self.d)
        if not self.noise_variance > 0:
            raise InvalidParameterError("noise_variance must be positive")
        self.side_ = bob_map(y, u_bits, self.d)
        return self

    def transform(self, x):
        check_is_fitted(self, "side_")
        return alice_llrs(x, self.side_, self.noise_variance)

    def predict(self, x):
        return (self.transform(x) < 0).astype(np.uint8)
