"""Command-line entry point ``ngrec``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, mdr, secanalysis
from .channel import ChannelParams, awgn_apply, estimate_snr
from .exceptions import ConstructionError, DataUnderrunError, NgrecError
from .metldpc import SparseParityMatrix, construct_matrix, decode, load_ensemble, syndrome
from .postselect import MODES, PostselectParams, QuadraturePairBlock, reject_sample
from .randsrc import SeedSpec, bit_block, gaussian_block

log = logging.getLogger("ngrec")

EXIT_CONFIG = 2
EXIT_CONSTRUCTION = 3
EXIT_RUNTIME = 4


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=float))


# ---------------------------------------------------------------- commands


def cmd_postselect(args) -> int:
    params = PostselectParams(args.T, args.va, args.k)
    seed = SeedSpec(args.seed or 0)
    block = QuadraturePairBlock.gaussian(args.n, args.va, seed.child(0))
    selected, report = reject_sample(params, block, seed.child(1), args.mode)
    samples = selected.accepted()
    out = Path(args.out)
    if out.suffix == ".npy":
        np.save(out, samples)
    else:
        np.savetxt(out, samples, fmt="%.17g", header="sample", comments="")
    report_path = out.with_suffix(".json")
    report_path.write_text(json.dumps(report.as_dict(), indent=2))
    _emit(report.as_dict())
    return 0


def cmd_channel(args) -> int:
    x = gaussian_block(args.n, args.va, SeedSpec(args.seed or 0).child(0))
    if args.snr is not None:
        params = ChannelParams.from_snr(args.snr, float(np.var(x)))
    else:
        params = ChannelParams(args.sigma2)
    y = awgn_apply(x, params, SeedSpec(args.seed or 0).child(1))
    if args.out:
        np.savetxt(args.out, np.column_stack([x, y]), fmt="%.17g", delimiter=",", header="x,y", comments="")
    _emit({"n": args.n, "noise_variance": params.noise_variance, "snr_measured": estimate_snr(x, y)})
    return 0


def cmd_mdr(args) -> int:
    d = args.dim
    n = args.blocks * d
    seed = SeedSpec(args.seed or 0)
    x = gaussian_block(n, args.va, seed.child(0))
    sigma2 = float(np.var(x)) / args.snr
    y = awgn_apply(x, ChannelParams(sigma2), seed.child(1))
    u = bit_block(n, seed.child(2))
    side = mdr.bob_map(y, u, d)
    # mapping exactness on Bob's own data
    y_units, _, _ = mdr.normalize_blocks(y, d)
    mapped = mdr.multiply(side.alpha, y_units)
    target = mdr.bits_to_signs(u.reshape(-1, d), d)
    llrs = mdr.alice_llrs(x, side, sigma2)
    if args.side_out:
        Path(args.side_out).write_bytes(side.to_bytes())
    _emit(
        {
            "dim": d,
            "blocks": args.blocks,
            "snr": args.snr,
            "max_mapping_error": float(np.max(np.abs(mapped - target))),
            "bit_error_rate": float(np.mean((llrs < 0) != (u == 1))),
        }
    )
    return 0


def _load_matrix(args) -> SparseParityMatrix:
    path = Path(args.matrix)
    if path.suffix == ".met" or not path.exists():
        return construct_matrix(load_ensemble(args.matrix), args.n, SeedSpec(args.code_seed))
    return SparseParityMatrix.load(path)


def cmd_decode(args) -> int:
    H = _load_matrix(args)
    if args.llrs:
        llrs = np.load(args.llrs)
        if not args.syndrome:
            raise NgrecError("--syndrome is required together with --llrs")
        s = np.load(args.syndrome).astype(np.uint8)
        reference = None
    else:
        # synthetic frame: random word over a binary-input AWGN channel
        seed = SeedSpec(args.seed or 0)
        reference = bit_block(H.n, seed.child(0))
        sigma = args.sigma
        y = (1.0 - 2.0 * reference) + sigma * gaussian_block(H.n, 1.0, seed.child(1))
        llrs = 2.0 * y / sigma**2
        s = syndrome(H, reference)
    result = decode(H, llrs, s, args.max_iter, args.schedule)
    if args.out:
        np.save(args.out, result.decoded_bits)
    summary = {
        "n": H.n,
        "m": H.m,
        "schedule": result.schedule,
        "converged": result.converged,
        "iterations": result.iterations,
        "residual_syndrome_weight": result.residual_syndrome_weight,
    }
    if reference is not None:
        summary["bit_errors"] = int(np.count_nonzero(result.decoded_bits != reference))
    _emit(summary)
    return 0


def cmd_skr(args) -> int:
    template = secanalysis.ProtocolParams(
        V_A=args.va, attenuation_db_per_km=args.att, epsilon=args.eps, beta=args.beta,
        T_ps=args.T, detector=args.detector,
    )
    distances = np.arange(0.0, args.dmax + args.step / 2, args.step)
    table = secanalysis.distance_curve(template, args.k, distances)
    cols = list(table)
    np.savetxt(args.out, np.column_stack([table[c] for c in cols]), delimiter=",",
               header=",".join(cols), comments="", fmt="%.10g")
    _emit({f"k{k}_max_distance_km": secanalysis.max_distance(template, k) for k in args.k})
    return 0


_BENCH_KEYS = {
    "kind": "data_kind", "rate": "rate", "beta_list": "beta_list", "snr_list": "snr_list",
    "frames": "frames_per_point", "n": "frame_bits", "schedule": "schedule", "max_iter": "max_iter",
    "dim": "dim", "seed": "master_seed", "mode": "mode", "ensemble": "ensemble", "early_stop": "early_stop",
}


def bench_config(args) -> harness.ExperimentConfig:
    data = {}
    if args.config:
        data.update(json.loads(Path(args.config).read_text()))
        # accept CLI-style keys in the file as well
        data = {_BENCH_KEYS.get(k.replace("-", "_"), k.replace("-", "_")): v for k, v in data.items()}
    for flag, key in _BENCH_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None and value is not False:
            data[key] = value
    if args.beta_list is not None:
        data.pop("snr_list", None)
    if args.snr_list is not None:
        data.pop("beta_list", None)
    return harness.ExperimentConfig.from_dict(data)


def cmd_bench(args) -> int:
    config = bench_config(args)
    if not config.snr_list:
        raise NgrecError("bench needs --beta-list, --snr-list or a config with one of them")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(snr, rec):
        log.info("snr %.5f frame %d ok=%s it=%d", snr, rec.frame_id, rec.success, rec.iterations)

    harness.code_matrix(config.ensemble_name, config.frame_bits, config.code_seed)
    summaries = harness.run_fer_experiment(config, progress)
    stem = f"{config.data_kind}_rate{config.rate:g}_{config.schedule}"
    harness.emit_report(summaries, out / f"{stem}.csv", "csv")
    harness.emit_report(summaries, out / f"{stem}.json", "json")
    for s in summaries:
        print(f"{s.data_kind} snr={s.snr:.5f} beta={s.beta:.4f} frames={s.frames} "
              f"fer={s.fer:.4f} [{s.fer_ci_lo:.4f}, {s.fer_ci_hi:.4f}] ain={s.ain:.2f}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ngrec", description="Non-Gaussian CV-QKD reconciliation toolkit")
    parser.add_argument("--seed", type=_u64, default=None, help="master seed (u64); stream id = frame index")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("postselect", help="virtual photon subtraction on fresh Gaussian data")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--T", type=float, default=0.8)
    p.add_argument("--va", type=float, default=20.0)
    p.add_argument("--n", type=int, default=1_000_000, help="number of (x, p) pairs")
    p.add_argument("--mode", choices=MODES, default="per-quadrature")
    p.add_argument("--out", required=True, help="accepted samples (.csv or .npy); report goes next to it")
    p.set_defaults(func=cmd_postselect)

    p = sub.add_parser("channel", help="AWGN channel on Gaussian data")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--snr", type=float)
    g.add_argument("--sigma2", type=float)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--va", type=float, default=20.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_channel)

    p = sub.add_parser("mdr", help="multidimensional reconciliation mapping on random blocks")
    p.add_argument("--dim", type=int, choices=mdr.DIMENSIONS, default=8)
    p.add_argument("--blocks", type=int, default=10_000)
    p.add_argument("--snr", type=float, default=0.1554)
    p.add_argument("--va", type=float, default=20.0)
    p.add_argument("--side-out", help="write Bob's side-information records here")
    p.set_defaults(func=cmd_mdr)

    p = sub.add_parser("decode", help="syndrome decoding with a cached matrix or an ensemble")
    p.add_argument("--matrix", required=True, help="matrix cache file, .met ensemble, or bundled ensemble name")
    p.add_argument("--n", type=int, default=100_000, help="code length when building from an ensemble")
    p.add_argument("--code-seed", type=int, default=1)
    p.add_argument("--schedule", choices=("bp", "lbp"), default="lbp")
    p.add_argument("--max-iter", type=int, default=150)
    p.add_argument("--llrs", help=".npy LLR vector; omit for a synthetic test frame")
    p.add_argument("--syndrome", help=".npy syndrome bits")
    p.add_argument("--sigma", type=float, default=2.5, help="noise std of the synthetic test frame")
    p.add_argument("--out", help="write decoded bits (.npy)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("skr", help="secret key rate against distance")
    p.add_argument("--va", type=float, default=20.0)
    p.add_argument("--beta", type=float, default=0.95)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--att", type=float, default=0.2)
    p.add_argument("--T", type=float, default=0.8)
    p.add_argument("--detector", choices=("homodyne", "heterodyne"), default="homodyne")
    p.add_argument("--k", type=_ints, default=[0, 1])
    p.add_argument("--dmax", type=float, default=200.0)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--out", default="curve.csv")
    p.set_defaults(func=cmd_skr)

    p = sub.add_parser("bench", help="FER/AIN campaign")
    p.add_argument("--config", help="JSON file with experiment settings; flags override it")
    p.add_argument("--kind", choices=harness.DATA_KINDS)
    p.add_argument("--rate", type=float)
    b = p.add_mutually_exclusive_group()
    b.add_argument("--beta-list", type=_floats)
    b.add_argument("--snr-list", type=_floats)
    p.add_argument("--frames", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--schedule", choices=("bp", "lbp"))
    p.add_argument("--max-iter", type=int)
    p.add_argument("--dim", type=int, choices=mdr.DIMENSIONS)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--ensemble")
    p.add_argument("--early-stop", action="store_true")
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConstructionError as exc:
        print(f"ngrec: construction failed: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    except DataUnderrunError as exc:
        print(f"ngrec: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (NgrecError, ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"ngrec: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
