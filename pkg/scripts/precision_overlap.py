#!/usr/bin/env python3
"""Compare occupancy over time for two runs with the same
precision-times-timeout product.

A coarse timer (many cycles per tick) with a short tick count and a
fine timer with a long tick count describe the same wall-clock idle
deadline, so their occupancy curves should lie on top of each other.
This prints both curves bucketed on a common wall-clock grid plus the
peak and mean gaps between them.

    python3 scripts/precision_overlap.py
    python3 scripts/precision_overlap.py --pair 6:382 --pair 12:191
"""

import argparse
import sys
from dataclasses import replace

from timerq.harness import bundled_params, gen_trace, load_params, run


def parse_pair(text: str) -> tuple[int, int]:
    precision, _, timeout = text.partition(":")
    return int(precision), int(timeout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--params", default=None,
                    help="params file (default: bundled univ_scale)")
    ap.add_argument("--pair", action="append", type=parse_pair,
                    help="precision:timeout, repeatable (default 6:382 "
                         "and 12:191)")
    ap.add_argument("--sample-ns", type=int, default=12288,
                    help="wall-clock spacing of occupancy samples")
    args = ap.parse_args(argv)
    pairs = args.pair or [(6, 382), (12, 191)]
    if len(pairs) != 2:
        ap.error("need exactly two precision:timeout pairs")

    source = args.params if args.params else bundled_params()
    params, extra = load_params(source)
    packets = gen_trace(extra["flows"], extra["packets"], extra["seed"],
                        extra["duration_ns"])

    curves = []
    stats = []
    for precision, timeout in pairs:
        series: list = []
        ticks = max(1, round(args.sample_ns / (precision * params.cycle_time_ns)))
        st = run(replace(params, precision=precision, timeout=timeout),
                 packets, occupancy_series=series, sample_ticks=ticks)
        # rebase ticks to wall-clock nanoseconds so the grids line up
        curves.append({round(t * precision * params.cycle_time_ns): occ
                       for t, occ in series})
        stats.append(st)
        print(f"p={precision} TO={timeout}: pops={st.pops} "
              f"max_occupancy={st.max_occupancy} cycles={st.cycles}")

    (pa, ta), (pb, tb) = pairs
    print(f"\nproduct p*TO: {pa * ta} vs {pb * tb}")
    common = sorted(set(curves[0]) & set(curves[1]))
    print(f"{'time_ns':>10} {'occ(p=' + str(pa) + ')':>10} "
          f"{'occ(p=' + str(pb) + ')':>10}")
    gaps = []
    for t in common:
        a, b = curves[0][t], curves[1][t]
        gaps.append(abs(a - b))
        print(f"{t:>10} {a:>10} {b:>10}")

    peak_a = stats[0].max_occupancy
    peak_b = stats[1].max_occupancy
    rel = abs(peak_a - peak_b) / max(peak_a, peak_b)
    print(f"\npeak occupancy: {peak_a} vs {peak_b} "
          f"(relative difference {rel:.4f})")
    if gaps:
        print(f"mean sample gap: {sum(gaps) / len(gaps):.2f} flows "
              f"over {len(gaps)} shared samples")
    return 0


if __name__ == "__main__":
    sys.exit(main())
