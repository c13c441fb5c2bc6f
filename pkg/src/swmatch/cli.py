"""Command-line entry point: ``swmatch <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import dataset, experiments
from .code_model import InvalidParameterError, build_layout, build_memory_circuit
from .dem import ModelError, extract_dem
from .frame_sim import iter_batches
from .runtime import StreamConfig, simulate_latency
from .windowing import partition


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def _ints(text):
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _emit(rows, out):
    """Rows to ``out`` (``.json`` -> JSON list, anything else -> CSV) or CSV on stdout."""
    rows = list(rows)
    if out and out.endswith(".json"):
        with open(out, "w") as fh:
            json.dump(rows, fh, indent=1)
        return
    if out:
        experiments.write_csv(rows, out)
        return
    if rows:
        w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def _common(p, rounds=True, shots=True):
    p.add_argument("--d", type=int, default=3, help="code distance (odd, >= 3)")
    p.add_argument("--p", type=float, default=0.003, help="physical error rate")
    if rounds:
        p.add_argument("--rounds", type=int, default=None, help="syndrome rounds N (default 3d)")
    if shots:
        p.add_argument("--shots", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="output path (.csv or .json; default: CSV on stdout)")


def _window_flags(p):
    p.add_argument("--buffer", default=None, help="buffer size b in rounds (default d)")
    p.add_argument("--core", type=int, default=None, help="core size c in rounds (default d)")


def _rounds(args):
    return 3 * args.d if args.rounds is None else args.rounds


def cmd_simulate(args):
    circuit = build_memory_circuit(build_layout(args.d), _rounds(args), args.p)
    dem = extract_dem(circuit)
    if not args.out:
        raise InvalidParameterError("simulate needs --out for the sample container")
    n = dataset.export_global(iter_batches(circuit, args.shots, args.seed, dem), dem, args.out)
    print(f"wrote {n} shots to {args.out}", file=sys.stderr)


def _detectors_from_file(path, dem):
    h, kinds, labels, tensors = dataset.load_dataset(path)
    if np.any(kinds != dataset.GLOBAL_KIND):
        raise dataset.DatasetFormatError("decode --input expects whole-experiment records (simulate output)")
    idx = dem.indexing
    if tensors.shape[1] != idx.num_rounds + 1 or h.d != int(idx.grid_pos.max()):
        raise dataset.DatasetFormatError("container does not match --d/--rounds")
    det = tensors[:, idx.layer, idx.grid_pos[:, 0], idx.grid_pos[:, 1]]
    return det, labels


def cmd_decode(args):
    N = _rounds(args)
    b = args.d if args.buffer is None else int(args.buffer)
    c = args.d if args.core is None else args.core
    if args.input is None:
        stats = experiments.run_memory_experiment(
            args.d, args.p, N, args.shots, args.mode, b, c, args.seed, workers=args.workers
        )
    else:
        circuit = build_memory_circuit(build_layout(args.d), N, args.p)
        dem = extract_dem(circuit)
        det, obs = _detectors_from_file(args.input, dem)
        from .estimators import MWPMDecoder, SlidingWindowDecoder

        if args.mode == "global":
            est = MWPMDecoder(args.d, args.p, N)
        else:
            est = SlidingWindowDecoder(args.d, args.p, N, b, c, merge=args.mode == "windowed_merge")
        pred = est.fit(det).predict(det)
        stats = experiments.ExperimentStats(len(obs), int(np.count_nonzero(pred != obs)), N)
    row = {"d": args.d, "p": args.p, "mode": args.mode, "b": b, "c": c}
    row.update(stats.as_dict())
    _emit([row], args.out)


def cmd_buffer_sweep(args):
    N = _rounds(args)
    b_values = _ints(args.buffer) if args.buffer else list(range(0, args.d + 3))
    rows = experiments.buffer_sweep(
        args.d, args.p, N, args.shots, b_values, args.core, seed=args.seed, workers=args.workers
    )
    _emit(rows, args.out)


def cmd_threshold_sweep(args):
    rows = experiments.threshold_sweep(
        _ints(args.distances), _floats(args.ps), args.shots, args.rounds, args.seed, workers=args.workers
    )
    try:
        print(f"# threshold estimate {experiments.estimate_threshold(rows):.5f}", file=sys.stderr)
    except ValueError as exc:
        print(f"# {exc}", file=sys.stderr)
    _emit(rows, args.out)


def cmd_window_stats(args):
    b = None if args.buffer is None else int(args.buffer)
    ws = experiments.window_stats(args.d, args.p, args.shots, args.rounds, b, args.core, args.seed, workers=args.workers)
    rows = [{"window": i, "kind": k, "rate": r} for i, (k, r) in enumerate(zip(ws.kinds, ws.rates))]
    rows.append({"window": "global", "kind": "p_g", "rate": ws.p_g})
    rows.append({"window": "global", "kind": "p_hat_g", "rate": ws.p_hat_g})
    _emit(rows, args.out)


def cmd_event_density(args):
    rows = []
    for p in _floats(args.ps) if args.ps else [args.p]:
        rows.append({"d": args.d, "p": p, "N": _rounds(args), "shots": args.shots,
                     "density": experiments.event_density(args.d, p, _rounds(args), args.shots, args.seed,
                                                          workers=args.workers)})
    _emit(rows, args.out)


def cmd_latency_sim(args):
    b = 0 if args.buffer is None else int(args.buffer)
    c = args.d if args.core is None else args.core
    cfg = StreamConfig(args.t_window, args.workers, b, c, args.t_round)
    trace = simulate_latency(cfg, args.rounds or 1000)
    state = "bounded" if trace.bounded else f"growing, slope {trace.slope():.6f} us/round"
    print(f"# {state}; peak latency {trace.peak_latency:.3f} us", file=sys.stderr)
    if args.out and args.out.endswith(".json"):
        _emit(
            ({"round": int(r), "generated_time": float(g), "decoded_through_time": float(d), "latency_us": float(x)}
             for r, g, d, x in zip(trace.rounds, trace.generated_time, trace.decoded_through_time, trace.latency)),
            args.out,
        )
    elif args.out:
        trace.to_csv(args.out)
    else:
        trace.to_csv(sys.stdout)


def cmd_export_dataset(args):
    N = _rounds(args)
    b = args.d if args.buffer is None else int(args.buffer)
    c = args.d if args.core is None else args.core
    if not args.out:
        raise InvalidParameterError("export-dataset needs --out")
    circuit = build_memory_circuit(build_layout(args.d), N, args.p)
    dem = extract_dem(circuit)
    n = dataset.export_windows(iter_batches(circuit, args.shots, args.seed, dem), dem, partition(N, b, c), args.out)
    print(f"wrote {n} records to {args.out}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swmatch", description="Sliding-window matching decoder experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample shots into a whole-experiment container")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decode", help="logical error rate of one decoder configuration")
    _common(p)
    _window_flags(p)
    p.add_argument("--mode", choices=experiments.MODES, default="global")
    p.add_argument("--input", default=None, help="decode a simulate container instead of fresh samples")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("buffer-sweep", help="LER against buffer size")
    _common(p)
    _window_flags(p)
    p.set_defaults(func=cmd_buffer_sweep)

    p = sub.add_parser("threshold-sweep", help="global-matching LER on a (d, p) grid")
    p.add_argument("--distances", default="3,5,7")
    p.add_argument("--ps", default="0.004,0.005,0.006,0.007,0.008,0.009")
    p.add_argument("--rounds", type=int, default=None, help="rounds per experiment (default d)")
    p.add_argument("--shots", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_threshold_sweep)

    p = sub.add_parser("window-stats", help="per-window error rates and the independence estimate")
    _common(p)
    _window_flags(p)
    p.set_defaults(func=cmd_window_stats)

    p = sub.add_parser("event-density", help="mean fraction of fired detectors")
    _common(p)
    p.add_argument("--ps", default=None, help="comma-separated list overriding --p")
    p.set_defaults(func=cmd_event_density)

    p = sub.add_parser("latency-sim", help="discrete-event decoding latency trace")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--rounds", type=int, default=1000)
    _window_flags(p)
    p.add_argument("--t-window", type=float, required=True, help="decoding time per window (us)")
    p.add_argument("--t-round", type=float, default=1.0, help="syndrome round duration (us)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_latency_sim)

    p = sub.add_parser("export-dataset", help="per-window training records")
    _common(p)
    _window_flags(p)
    p.set_defaults(func=cmd_export_dataset)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (InvalidParameterError, ModelError, dataset.DatasetFormatError, ValueError) as exc:
        print(f"swmatch: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
