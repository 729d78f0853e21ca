"""Command line entry point.

Subcommands:
  run            full campaign (drops x models) with CSV outputs
  single         one drop, one model; optionally save/load the graph file
  channel-stats  analytic state probabilities + Monte Carlo link statistics
  verify         randomized cross-checks of the fast paths

Exit codes: 0 success, 2 bad configuration/arguments, 3 contract violation
or failed verification, 4 I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .channel import (DEFAULT_CHANNEL, DEFAULT_RADIOS, NodeClass,
                      link_rate_bits, sample_link_channel, state_probabilities)
from .harness import (PROFILES, ConfigError, SimConfig, emit_plots,
                      load_config, run_campaign, run_single, write_csv)
from .queues import ContractViolation
from .scheduler import ConstraintModel
from .topology import DropGenerationError, generate_drop, load_graph, save_graph
from .verify import run_verification

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONTRACT = 3
EXIT_IO = 4


def _base_config(args) -> SimConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = PROFILES[args.profile]()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "frames", None) is not None:
        overrides["frames"] = args.frames
    if getattr(args, "drops", None) is not None:
        overrides["drops"] = args.drops
    if getattr(args, "arrival_law", None) is not None:
        overrides["arrival_law"] = args.arrival_law
    if getattr(args, "model", None):
        overrides["models"] = tuple(ConstraintModel(m) for m in args.model)
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    return cfg


def _fmt_rate(bits_s: float) -> str:
    if not math.isfinite(bits_s):
        return str(bits_s)
    return f"{bits_s / 1e9:.4f} Gbit/s"


def _cmd_run(args) -> int:
    cfg = _base_config(args)
    out = Path(args.out)
    summary = run_campaign(cfg, out_dir=out,
                           emit_timeseries=not args.no_timeseries)
    for model, st in summary.model_stats.items():
        print(f"{model:10s} runs_ok={st['runs_ok']:3d} "
              f"sum_rate={_fmt_rate(st['mean_sumrate_bits_s'])} "
              f"(std {_fmt_rate(st['std_sumrate_bits_s'])}) "
              f"utility={st['mean_utility']:.4f}")
    for name, pct in summary.gains_pct.items():
        print(f"gain {name}: {pct:+.1f}%")
    n_fail = sum(1 for r in summary.records if not r.ok)
    if n_fail:
        print(f"{n_fail} run(s) failed; see {out / 'failures.csv'}",
              file=sys.stderr)
    if args.plots:
        _make_plots(out)
    print(f"outputs written to {out}")
    return EXIT_CONTRACT if n_fail else EXIT_OK


def _make_plots(out: Path) -> None:
    try:
        for run_dir in sorted(out.glob("drop_*/*")):
            if run_dir.is_dir():
                emit_plots(run_dir)
    except ImportError:
        print("matplotlib not available; skipping plots", file=sys.stderr)


def _cmd_single(args) -> int:
    cfg = _base_config(args)
    model = ConstraintModel(args.model[0]) if args.model else cfg.models[0]
    if model not in cfg.models:
        from dataclasses import replace
        cfg = replace(cfg, models=(model,))
    # Mirror the campaign seed discipline so `single --seed S` reproduces
    # drop 0 of the campaign with the same master seed.
    subs = np.random.SeedSequence(cfg.master_seed).spawn(1)[0].spawn(
        1 + len(cfg.models))
    if args.graph_in:
        g = load_graph(args.graph_in)
    else:
        g = generate_drop(cfg.drop, cfg.channel, cfg.radio_map(),
                          rng=np.random.default_rng(subs[0]))
    if args.save_graph:
        save_graph(g, args.save_graph)
        print(f"graph written to {args.save_graph}")
    out = Path(args.out) if args.out else None
    idx = cfg.models.index(model)
    log = run_single(cfg, g, model, subs[1 + idx], drop_index=0, out_dir=out)
    print(f"{model.value}: sum_rate={_fmt_rate(log.sum_rate_bits_s)} "
          f"sum_utility={log.sum_utility(cfg.make_utility()):.4f} "
          f"final_queue_bits={log.final_queues.sum():.1f}")
    if out is not None and args.plots:
        try:
            emit_plots(out)
        except ImportError:
            print("matplotlib not available; skipping plots", file=sys.stderr)
    return EXIT_OK


def _cmd_channel_stats(args) -> int:
    try:
        distances = [float(s) for s in args.distances.split(",") if s.strip()]
    except ValueError:
        print(f"bad --distances value: {args.distances!r}", file=sys.stderr)
        return EXIT_CONFIG
    if not distances or any(d <= 0 for d in distances):
        print("distances must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        tx_radio = DEFAULT_RADIOS[NodeClass(args.tx_class)]
        rx_radio = DEFAULT_RADIOS[NodeClass(args.rx_class)]
    except ValueError as e:
        print(f"bad node class: {e}", file=sys.stderr)
        return EXIT_CONFIG
    params = DEFAULT_CHANNEL
    rng = np.random.default_rng(args.seed)
    rows = []
    for d in distances:
        p_los, p_nlos, p_out = state_probabilities(d)
        pl_samples, rate_sum = [], 0.0
        for _ in range(args.samples):
            chan = sample_link_channel(d, rx_radio.n_antennas,
                                       tx_radio.n_antennas, params, rng)
            rate_sum += link_rate_bits(1.0, tx_radio, rx_radio, chan, params)
            if math.isfinite(chan.pathloss_db):
                pl_samples.append(chan.pathloss_db)
        mean_pl = sum(pl_samples) / len(pl_samples) if pl_samples else math.nan
        rows.append((d, p_out, p_los, mean_pl, rate_sum / args.samples))
    header = ["distance_m", "p_out", "p_los", "mean_pl_db", "mean_rate_bits"]
    if args.out:
        write_csv(args.out, header, rows)
        print(f"channel statistics written to {args.out}")
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(repr(float(x)) for x in row))
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = run_verification(args.seed)
    n_fail = 0
    for r in results:
        mark = "PASS" if r.ok else "FAIL"
        print(f"[{mark}] {r.name}: {r.detail} ({r.elapsed_s:.2f}s)")
        n_fail += 0 if r.ok else 1
    return EXIT_OK if n_fail == 0 else EXIT_CONTRACT


def _add_common(p: argparse.ArgumentParser, with_drops: bool = True) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--profile", choices=sorted(PROFILES),
                   default="desk", help="built-in preset (default: desk)")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--frames", type=int, help="frames per run override")
    if with_drops:
        p.add_argument("--drops", type=int, help="number of drops override")
    p.add_argument("--model", action="append",
                   choices=[m.value for m in ConstraintModel],
                   help="constraint model (repeatable; default: config)")
    p.add_argument("--arrival-law",
                   choices=["deterministic", "poisson"],
                   help="arrival law override")
    p.add_argument("--plots", action="store_true",
                   help="also render SVG plots (needs matplotlib)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="picomesh",
        description="Frame-level simulator for back-pressure scheduling in "
                    "multi-hop mmWave picocell networks.")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a full campaign")
    _add_common(p_run)
    p_run.add_argument("--out", default="picomesh_out", help="output directory")
    p_run.add_argument("--no-timeseries", action="store_true",
                       help="skip per-run time-series CSVs")
    p_run.set_defaults(func=_cmd_run)

    p_single = sub.add_parser("single", help="run one drop / one model")
    _add_common(p_single, with_drops=False)
    p_single.add_argument("--out", help="output directory for time series")
    p_single.add_argument("--save-graph", help="write the generated graph file")
    p_single.add_argument("--graph-in", help="load a graph file instead of "
                                             "generating a drop")
    p_single.set_defaults(func=_cmd_single)

    p_stats = sub.add_parser("channel-stats",
                             help="link-level statistics vs distance")
    p_stats.add_argument("--distances", default="25,50,100,150",
                         help="comma-separated distances in meters")
    p_stats.add_argument("--samples", type=int, default=1000,
                         help="Monte Carlo samples per distance")
    p_stats.add_argument("--tx-class", default="BS",
                         choices=[c.value for c in NodeClass])
    p_stats.add_argument("--rx-class", default="UE",
                         choices=[c.value for c in NodeClass])
    p_stats.add_argument("--seed", type=int, default=0)
    p_stats.add_argument("--out", help="CSV output path (default: stdout)")
    p_stats.set_defaults(func=_cmd_channel_stats)

    p_verify = sub.add_parser("verify", help="randomized self-checks")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.set_defaults(func=_cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DropGenerationError, ContractViolation) as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
