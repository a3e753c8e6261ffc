"""Sweep the three-way interaction strength and tabulate rejection rates.

Writes one TSV row per grid point.  With --paired-loss the same sweep is
repeated under a second loss for a side by side robustness column.

Typical call:

    python3 scripts/run_power_table.py --n 300 --reps 200 --out power.tsv
"""

from __future__ import annotations

import argparse
import sys
import time

from robkmr.inference import TestKind
from robkmr.losses import make_loss
from robkmr.simulate import SimConfig, estimate_power


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=300, help="samples per replicate")
    p.add_argument("--reps", type=int, default=200, help="replicates per grid point")
    p.add_argument("--seed", type=int, default=20240401)
    p.add_argument("--grid", default="0,0.25,0.5,0.75,1.0", help="alpha3 values, comma separated")
    p.add_argument("--test", choices=[k.value for k in TestKind], default="composite")
    p.add_argument("--loss", default="huber")
    p.add_argument("--paired-loss", default=None, help="optional second loss to sweep alongside")
    p.add_argument("--contamination", type=float, default=0.0)
    p.add_argument("--contam-target", default="y", choices=("y", "features", "both"))
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="TSV path (default stdout)")
    return p.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    grid = [float(v) for v in args.grid.split(",")]
    losses = [args.loss] + ([args.paired_loss] if args.paired_loss else [])

    out = open(args.out, "w") if args.out else sys.stdout
    out.write("loss\talpha3\ttest\treps\texcluded\trejections\trate\tse\tseconds\n")
    for loss_kind in losses:
        for a3 in grid:
            cfg = SimConfig(
                n=args.n,
                alphas=(0.0, 0.0, a3),
                reps=args.reps,
                seed=args.seed,
                loss=make_loss(loss_kind),
                contamination=args.contamination,
                contam_target=args.contam_target,
                test_kind=TestKind(args.test),
            )
            t0 = time.perf_counter()
            row = estimate_power(cfg, n_threads=args.threads)
            dt = time.perf_counter() - t0
            out.write(
                f"{loss_kind}\t{a3:g}\t{row.test_kind.value}\t{row.reps}\t{row.n_excluded}"
                f"\t{row.rejections}\t{row.rate:.4f}\t{row.standard_error:.4f}\t{dt:.1f}\n"
            )
            out.flush()
            print(f"alpha3={a3:g} loss={loss_kind}: power {row.rate:.3f} ({dt:.0f}s)", file=sys.stderr)
    if args.out:
        out.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
