"""End-to-end reverse-reconciliation pipeline and FER/AIN campaigns.

One frame runs through

    raw Gaussian data -> (virtual photon subtraction) -> AWGN channel
    -> Bob: normalise, map onto random bits, syndrome
    -> Alice: rotate, LLRs, syndrome decoding
    -> key verification

The Bob/Alice split is structural: :func:`bob_encode` returns the private key
bits and a :class:`Disclosure`, and :func:`alice_decode` only ever receives
the disclosure plus Alice's own data.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy import stats

from .channel import ChannelParams, awgn_apply, estimate_snr
from .exceptions import DataUnderrunError, InvalidParameterError
from .mdr import DIMENSIONS, SideInformation, alice_llrs, bob_map
from .metldpc import SparseParityMatrix, construct_matrix, decode, load_ensemble, syndrome
from .postselect import (
    MODES,
    PostselectParams,
    QuadraturePairBlock,
    acceptance_constant,
    reject_sample,
    success_probability,
)
from .randsrc import SeedSpec, bit_block, gaussian_block
from .secanalysis import awgn_capacity, beta_snr_map

log = logging.getLogger(__name__)

DATA_KINDS = ("gaussian", "vps-1", "vps-2", "vps-3")
SAFETY_FACTOR = 1.3
REPORT_COLUMNS = (
    "data_kind", "rate", "snr", "beta", "frames", "fer", "fer_ci_lo", "fer_ci_hi", "ain", "schedule",
)
# Substream tags inside one frame's seed.
_RAW, _SELECT, _NOISE, _KEY = 0, 1, 2, 3
# Noise variance standing in for a noiseless channel when forming LLRs.
_NOISELESS_SIGMA2 = 1e-30


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a campaign, hence its results bit for bit."""

    data_kind: str = "gaussian"
    rate: float = 0.1
    snr_list: tuple[float, ...] = ()
    beta_list: tuple[float, ...] = ()
    frame_bits: int = 1_000_000
    frames_per_point: int = 100
    max_iter: int = 150
    schedule: Literal["bp", "lbp"] = "lbp"
    dim: int = 8
    master_seed: int = 0
    code_seed: int = 1
    ensemble: str | None = None
    modulation_variance: float = 20.0
    transmittance: float = 0.8
    mode: str = "per-quadrature"
    early_stop: bool = False
    min_frames: int = 20

    def __post_init__(self):
        object.__setattr__(self, "snr_list", tuple(float(s) for s in self.snr_list))
        object.__setattr__(self, "beta_list", tuple(float(b) for b in self.beta_list))
        if self.data_kind not in DATA_KINDS:
            raise InvalidParameterError(f"data_kind must be one of {DATA_KINDS}, got {self.data_kind!r}")
        if not 0 < self.rate < 1:
            raise InvalidParameterError("rate must lie in (0, 1)")
        if self.snr_list and self.beta_list:
            raise InvalidParameterError("give snr_list or beta_list, not both")
        if self.beta_list:
            snrs = tuple(beta_snr_map(self.rate, beta=b) for b in self.beta_list)
            object.__setattr__(self, "snr_list", snrs)
        if any(not s > 0 for s in self.snr_list):
            raise InvalidParameterError("SNR values must be positive")
        if self.dim not in DIMENSIONS:
            raise InvalidParameterError(f"dim must be one of {DIMENSIONS}")
        if self.frame_bits < self.dim or self.frame_bits % self.dim:
            raise InvalidParameterError("frame_bits must be a positive multiple of dim")
        if self.frames_per_point < 1:
            raise InvalidParameterError("frames_per_point must be at least 1")
        if self.max_iter < 1:
            raise InvalidParameterError("max_iter must be at least 1")
        if self.schedule not in ("bp", "lbp"):
            raise InvalidParameterError("schedule must be 'bp' or 'lbp'")
        if self.mode not in MODES:
            raise InvalidParameterError(f"mode must be one of {MODES}")
        if self.modulation_variance <= 0:
            raise InvalidParameterError("modulation_variance must be positive")

    @property
    def k(self) -> int:
        return 0 if self.data_kind == "gaussian" else int(self.data_kind.split("-")[1])

    @property
    def ensemble_name(self) -> str:
        return self.ensemble or f"rate_{self.rate:g}"

    @property
    def seed(self) -> SeedSpec:
        return SeedSpec(self.master_seed)

    def postselect_params(self) -> PostselectParams:
        return PostselectParams(self.transmittance, self.modulation_variance, self.k)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TrialRecord:
    frame_id: int
    converged: bool
    iterations: int
    bit_errors_post_decode: int
    snr_measured: float
    wrong_word: bool = False

    @property
    def success(self) -> bool:
        return self.converged and self.bit_errors_post_decode == 0


@dataclass(frozen=True)
class PointSummary:
    data_kind: str
    rate: float
    snr: float
    beta: float
    frames: int
    fer: float
    fer_ci_lo: float
    fer_ci_hi: float
    ain: float
    schedule: str
    failures: int = 0
    ain_converged: float = math.nan
    throughput_bits_per_s: float = math.nan

    def row(self) -> dict:
        return {c: getattr(self, c) for c in REPORT_COLUMNS}


@dataclass(frozen=True)
class Disclosure:
    """Everything Bob sends over the authenticated public channel."""

    side: SideInformation
    syndrome: np.ndarray
    noise_variance: float
    key_digest: bytes = field(repr=False, default=b"")


# ---------------------------------------------------------------- resources


@lru_cache(maxsize=8)
def code_matrix(ensemble: str, n: int, code_seed: int) -> SparseParityMatrix:
    """Parity-check matrix for ``ensemble`` at length ``n`` (cached per process)."""
    H = construct_matrix(load_ensemble(ensemble), n, SeedSpec(code_seed))
    if H.n != n:
        raise InvalidParameterError("punctured ensembles are not supported by the pipeline")
    return H


@lru_cache(maxsize=32)
def sampling_efficiency(params: PostselectParams, mode: str) -> float:
    """Expected fraction of raw samples that survive postselection."""
    if params.k == 0:
        return 1.0
    if mode == "joint":
        k = params.k
        return success_probability(params) * math.factorial(k) * math.e**k / k**k
    return 1.0 / acceptance_constant(params)


def raw_draw_size(config: ExperimentConfig) -> int:
    """Number of raw samples drawn so that ``frame_bits`` survive with margin."""
    eff = sampling_efficiency(config.postselect_params(), config.mode)
    return int(math.ceil(config.frame_bits / eff * SAFETY_FACTOR))


def _beta(rate: float, snr: float) -> float:
    return rate / awgn_capacity(snr) if math.isfinite(snr) else 0.0


# ---------------------------------------------------------------- data


def frame_data(config: ExperimentConfig, frame_id: int, snr: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Correlated ``(x, y, sigma2)`` of length ``frame_bits`` for one frame.

    Noise hits the raw stream before Alice's selection mask is applied; the
    noise variance is set from the variance of the samples that survive.
    """
    seed = config.seed.for_frame(frame_id)
    n = config.frame_bits
    if config.k == 0:
        x_raw = gaussian_block(n, config.modulation_variance, seed.child(_RAW))
        keep = np.ones(n, dtype=bool)
    else:
        pairs = -(-raw_draw_size(config) // 2)
        block = QuadraturePairBlock.gaussian(pairs, config.modulation_variance, seed.child(_RAW))
        params = config.postselect_params()
        c = 1.0 / sampling_efficiency(params, "per-quadrature") if config.mode == "per-quadrature" else None
        selected, _ = reject_sample(params, block, seed.child(_SELECT), config.mode, c)
        x_raw = selected.stream()
        keep = selected.stream_mask()
        idx = np.flatnonzero(keep)
        if idx.size < n:
            raise DataUnderrunError(
                f"only {idx.size} of {n} samples survived postselection; "
                f"increase the raw draw (safety factor {SAFETY_FACTOR})"
            )
        keep = np.zeros_like(keep)
        keep[idx[:n]] = True
    x = x_raw[keep]
    if math.isinf(snr):
        return x, x.copy(), _NOISELESS_SIGMA2
    sigma2 = float(np.var(x)) / snr
    y_raw = awgn_apply(x_raw, ChannelParams(sigma2), seed.child(_NOISE))
    return x, y_raw[keep], sigma2


def bob_encode(y: np.ndarray, H: SparseParityMatrix, dim: int, sigma2: float, seed: SeedSpec):
    """Bob's side: draw the key, map his data onto it, disclose the syndrome.

    Returns ``(u_bits, disclosure)``; ``u_bits`` never leaves Bob.
    """
    u = bit_block(y.size, seed.child(_KEY))
    side = bob_map(y, u, dim)
    digest = hashlib.sha256(np.packbits(u).tobytes()).digest()
    return u, Disclosure(side, syndrome(H, u), sigma2, digest)


def alice_decode(x: np.ndarray, disclosure: Disclosure, H: SparseParityMatrix, max_iter: int, schedule: str):
    """Alice's side: LLRs from her data and the disclosure, then decoding."""
    llrs = alice_llrs(x, disclosure.side, disclosure.noise_variance)
    return decode(H, llrs, disclosure.syndrome, max_iter, schedule)


def run_pipeline(config: ExperimentConfig, frame_id: int, snr: float | None = None) -> TrialRecord:
    """Run one frame at ``snr`` (default: the first configured point).

    ``snr=math.inf`` gives a noiseless channel.
    """
    if snr is None:
        if not config.snr_list:
            raise InvalidParameterError("no SNR given and the config lists none")
        snr = config.snr_list[0]
    H = code_matrix(config.ensemble_name, config.frame_bits, config.code_seed)
    x, y, sigma2 = frame_data(config, frame_id, snr)
    snr_measured = math.inf if math.isinf(snr) else estimate_snr(x, y)
    u, disclosure = bob_encode(y, H, config.dim, sigma2, config.seed.for_frame(frame_id))
    result = alice_decode(x, disclosure, H, config.max_iter, config.schedule)
    errors = int(np.count_nonzero(result.decoded_bits != u))
    agreed = hashlib.sha256(np.packbits(result.decoded_bits).tobytes()).digest() == disclosure.key_digest
    return TrialRecord(
        frame_id=frame_id,
        converged=result.converged,
        iterations=result.iterations,
        bit_errors_post_decode=errors,
        snr_measured=snr_measured,
        wrong_word=result.converged and not agreed,
    )


# ---------------------------------------------------------------- campaigns


def fer_interval(failures: int, frames: int, level: float = 0.95) -> tuple[float, float]:
    """Exact (Clopper-Pearson) binomial interval for the frame error rate."""
    ci = stats.binomtest(failures, frames).proportion_ci(level, method="exact")
    return float(ci.low), float(ci.high)


def summarize(config: ExperimentConfig, snr: float, records: Sequence[TrialRecord], elapsed: float) -> PointSummary:
    frames = len(records)
    failures = sum(not r.success for r in records)
    lo, hi = fer_interval(failures, frames)
    iters = np.array([r.iterations for r in records], dtype=float)
    conv = np.array([r.iterations for r in records if r.success], dtype=float)
    return PointSummary(
        data_kind=config.data_kind,
        rate=config.rate,
        snr=snr,
        beta=_beta(config.rate, snr),
        frames=frames,
        fer=failures / frames,
        fer_ci_lo=lo,
        fer_ci_hi=hi,
        ain=float(iters.mean()),
        schedule=config.schedule,
        failures=failures,
        ain_converged=float(conv.mean()) if conv.size else math.nan,
        throughput_bits_per_s=frames * config.frame_bits / elapsed if elapsed > 0 else math.nan,
    )


def _should_stop(config: ExperimentConfig, records: Sequence[TrialRecord]) -> bool:
    if not config.early_stop or len(records) < config.min_frames:
        return False
    failures = sum(not r.success for r in records)
    if failures == 0:
        return False
    lo, hi = fer_interval(failures, len(records))
    return hi - lo < 0.2 * failures / len(records)


def run_point(config: ExperimentConfig, snr: float, progress=None) -> tuple[PointSummary, list[TrialRecord]]:
    """All frames of one SNR point. Frame ``i`` always uses stream ``i``."""
    records: list[TrialRecord] = []
    start = time.perf_counter()
    for frame_id in range(config.frames_per_point):
        records.append(run_pipeline(config, frame_id, snr))
        if progress is not None:
            progress(snr, records[-1])
        if _should_stop(config, records):
            log.info("early stop at snr %.5f after %d frames", snr, len(records))
            break
    return summarize(config, snr, records, time.perf_counter() - start), records


def run_fer_experiment(config: ExperimentConfig, progress=None) -> list[PointSummary]:
    """FER and AIN for every configured SNR point."""
    if not config.snr_list:
        raise InvalidParameterError("config has no SNR points")
    return [run_point(config, snr, progress)[0] for snr in config.snr_list]


def key_agreement_check(config: ExperimentConfig, frames: int = 1) -> bool:
    """Noiseless self-check: every frame must end in an exact key match."""
    return all(run_pipeline(config, f, math.inf).success for f in range(frames))


# ---------------------------------------------------------------- reports

_FLOAT_COLUMNS = {"rate", "snr", "beta", "fer", "fer_ci_lo", "fer_ci_hi", "ain"}


def emit_report(summaries: Sequence[PointSummary], path: str | Path, format: str = "csv") -> Path:
    """Write summaries as CSV or JSON with the fixed column order."""
    if not summaries:
        raise InvalidParameterError("nothing to report")
    path = Path(path)
    rows = [s.row() for s in summaries]
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: repr(v) if k in _FLOAT_COLUMNS else v for k, v in row.items()})
    elif format == "json":
        path.write_text(json.dumps(rows, indent=2))
    else:
        raise InvalidParameterError(f"unknown report format {format!r}")
    return path


def read_report(path: str | Path) -> list[dict]:
    """Parse a report written by :func:`emit_report` back into typed rows."""
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k in REPORT_COLUMNS:
                v = row[k]
                parsed[k] = float(v) if k in _FLOAT_COLUMNS else int(v) if k == "frames" else v
            out.append(parsed)
    return out


def summary_from_row(row: dict) -> PointSummary:
    return PointSummary(**{k: row[k] for k in REPORT_COLUMNS})


def with_kind(config: ExperimentConfig, kind: str, **changes) -> ExperimentConfig:
    """Copy of ``config`` for another data kind, keeping every other setting."""
    return replace(config, data_kind=kind, beta_list=(), **changes)


__all__ = [
    "DATA_KINDS",
    "REPORT_COLUMNS",
    "Disclosure",
    "ExperimentConfig",
    "PointSummary",
    "TrialRecord",
    "alice_decode",
    "bob_encode",
    "code_matrix",
    "emit_report",
    "fer_interval",
    "frame_data",
    "key_agreement_check",
    "raw_draw_size",
    "read_report",
    "run_fer_experiment",
    "run_pipeline",
    "run_point",
    "summarize",
    "with_kind",
]
