#!/usr/bin/env python3
"""Print the FLOP accounting story for the reference model configs.

For each config: parameter count, total training FLOPs per step, the FFN
fraction, and the Amdahl end-to-end speedups implied by a few FFN-only
speedup factors.  Then the fraction sweep as CSV and the conversion-cost
model for the default V:N:M parameters.
"""

import argparse
import glob
import json
import os
import sys

import sfk

DEFAULT_GLOB = os.path.join(os.path.dirname(__file__), "..", "configs", "*.json")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", nargs="*", default=None,
                    help="config JSON files (default: configs/*.json)")
    ap.add_argument("--ffn-speedups", default="1.5,2.2,7",
                    help="comma-separated FFN-only speedup factors")
    ap.add_argument("--venom", default="64,2,16", help="V,N,M for the conversion model")
    ap.add_argument("--experts", type=int, default=16)
    args = ap.parse_args(argv)

    paths = args.configs or sorted(glob.glob(DEFAULT_GLOB))
    configs = []
    for path in paths:
        with open(path) as fh:
            configs.extend(sfk.load_configs(fh.read()))
    if not configs:
        print("no configs found", file=sys.stderr)
        return 2

    speedups = [float(s) for s in args.ffn_speedups.split(",")]
    for c in configs:
        print(f"== {c.name} ==")
        print(f"  params            {sfk.param_count(c):,}")
        print(f"  step FLOPs        {sfk.total_flops(c):,}")
        print(f"  ffn fraction      {sfk.ffn_fraction(c):.6f}")
        for s in speedups:
            print(f"  end-to-end at {s:>4}x FFN: {sfk.end_to_end_speedup(c, s):.6f}")
    print()
    print(sfk.sweep_csv(configs), end="")
    print()

    v, n, m = (int(t) for t in args.venom.split(","))
    p = sfk.VenomParams(v, n, m)
    for c in configs:
        ov = sfk.conversion_overhead_model(c, p, num_experts=args.experts)
        print(f"conversion overhead, {c.name} ({v}:{n}:{m}, {args.experts} experts, "
              f"balance {ov['machine_balance']} FLOP/byte):")
        for stage in ("routing", "permutation", "sparsify_scan", "expert_matmul"):
            d = ov[stage]
            print(f"  {stage:<14} {d['bytes']:>14,} bytes {d['flops']:>16,} flops  {d['bound']}-bound")
    return 0


if __name__ == "__main__":
    sys.exit(main())
