"""Seedable, stateless random sources.

Every draw is a pure function of ``(master_seed, stream_id, substream)``.
Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so
frame ``i`` of a campaign can be regenerated in isolation and in any order
without touching shared generator state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidParameterError

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeedSpec:
    """Address of one independent random stream.

    ``stream_id`` is the frame (or block) index. ``substream`` separates the
    different consumers inside one frame (raw data, channel noise, rejection
    draws, key bits) so that changing one never perturbs the others.
    """

    master_seed: int = 0
    stream_id: int = 0
    substream: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= int(value) <= _U64:
                raise InvalidParameterError(f"{name} must fit in an unsigned 64-bit integer, got {value}")
        object.__setattr__(self, "substream", tuple(int(s) for s in self.substream))

    def child(self, *tags: int) -> "SeedSpec":
        """Return a stream nested under this one."""
        return SeedSpec(self.master_seed, self.stream_id, self.substream + tuple(tags))

    def for_frame(self, frame_id: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, frame_id, self.substream)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed), spawn_key=(int(self.stream_id),) + self.substream
        )
        return np.random.Generator(np.random.PCG64(seq))


def _as_seed(seed) -> SeedSpec:
    if isinstance(seed, SeedSpec):
        return seed
    if seed is None:
        return SeedSpec()
    return SeedSpec(int(seed))


def gaussian_block(n: int, variance: float, seed: SeedSpec | int | None = None) -> np.ndarray:
    """Draw ``n`` i.i.d. samples from ``Normal(0, variance)``."""
    variance = float(variance)
    if not np.isfinite(variance) or variance <= 0:
        raise InvalidParameterError(f"variance must be finite and positive, got {variance}")
    if n < 0:
        raise InvalidParameterError("n must be non-negative")
    rng = _as_seed(seed).generator()
    return rng.standard_normal(int(n)) * np.sqrt(variance)


def uniform_block(n: int, seed: SeedSpec | int | None = None) -> np.ndarray:
    """Draw ``n`` i.i.d. samples from ``U[0, 1)``; ``n == 0`` gives an empty array."""
    if n < 0:
        raise InvalidParameterError("n must be non-negative")
    return _as_seed(seed).generator().random(int(n))


def bit_block(n: int, seed: SeedSpec | int | None = None) -> np.ndarray:
    """Draw ``n`` fair bits as ``uint8``."""
    if n < 0:
        raise InvalidParameterError("n must be non-negative")
    return _as_seed(seed).generator().integers(0, 2, size=int(n), dtype=np.uint8)


def longest_run(bits: np.ndarray) -> int:
    """Length of the longest run of identical symbols."""
    bits = np.asarray(bits)
    if bits.size == 0:
        return 0
    change = np.flatnonzero(np.diff(bits) != 0)
    edges = np.concatenate(([-1], change, [bits.size - 1]))
    return int(np.diff(edges).max())
