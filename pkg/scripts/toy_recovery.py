#!/usr/bin/env python3
"""Toy-scale training comparison: sparse-then-dense recovery and loss continuity.

Part one trains the same teacher-student task under three schedules (all
dense, all sparse, sparse-then-dense) and reports final smoothed losses:
the mixed schedule should land near dense and beat all-sparse.  Part two
re-runs with a fixed batch (full-batch descent) under weight-only
sparsification and compares per-step loss-jump quantiles between
soft-threshold and hard-mask updates: shrinkage keeps the loss landscape
continuous, so its jumps should be smaller.
"""

import argparse
import sys

import sfk


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=2500)
    ap.add_argument("--sparse-steps", type=int, default=None,
                    help="sparse phase length for the mixed schedule (default 60%%)")
    ap.add_argument("--lr", type=float, default=0.05)
    ap.add_argument("--dims", default="32,128,32")
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--seeds", default="0,1,2")
    args = ap.parse_args(argv)

    din, dhid, dout = (int(t) for t in args.dims.split(","))
    seeds = [int(s) for s in args.seeds.split(",")]
    sparse_steps = args.sparse_steps if args.sparse_steps is not None else (args.steps * 3) // 5

    print(f"dims {din}/{dhid}/{dout}, batch {args.batch_size}, lr {args.lr}, "
          f"{args.steps} steps, mixed schedule = sparse {sparse_steps} then dense")
    print(f"{'seed':>4} {'dense':>10} {'mixed':>10} {'all-sparse':>10}  recovery")
    for seed in seeds:
        task = sfk.ToyTask(input_dim=din, hidden_dim=dhid, output_dim=dout,
                           batch_size=args.batch_size, seed=seed)
        dense = sfk.run_training(task, sfk.build_schedule(args.steps, 0, 0),
                                 lr=args.lr, steps=args.steps)
        mixed = sfk.run_training(task, sfk.build_schedule(args.steps, sparse_steps, 0),
                                 lr=args.lr, steps=args.steps)
        allsp = sfk.run_training(task, sfk.build_schedule(args.steps, args.steps, 0),
                                 lr=args.lr, steps=args.steps)
        ok = mixed.final_loss <= allsp.final_loss
        print(f"{seed:>4} {dense.final_loss:>10.4f} {mixed.final_loss:>10.4f} "
              f"{allsp.final_loss:>10.4f}  {'ok' if ok else 'WORSE'}")

    print()
    print("loss continuity (fixed batch, weight-sparse only):")
    print(f"{'seed':>4} {'soft q95':>12} {'hard q95':>12} {'soft max':>12} {'hard max':>12}")
    for seed in seeds:
        fixed = sfk.ToyTask(input_dim=din, hidden_dim=dhid, output_dim=dout,
                            batch_size=args.batch_size, seed=seed, fixed_batch=True)
        stats = {}
        for mode in (sfk.SOFT_THRESHOLD, sfk.GREEDY_MAGNITUDE):
            pol = sfk.SparsityPolicy(w1_sparse=True, weight_mode=mode)
            rep = sfk.run_training(
                fixed, sfk.build_schedule(args.steps, args.steps, 0, sparse_policy=pol),
                lr=args.lr, steps=args.steps)
            stats[mode] = (sfk.loss_jump_quantile(rep, 0.95), sfk.max_loss_jump(rep))
        s, h = stats[sfk.SOFT_THRESHOLD], stats[sfk.GREEDY_MAGNITUDE]
        print(f"{seed:>4} {s[0]:>12.3e} {h[0]:>12.3e} {s[1]:>12.3e} {h[1]:>12.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
