#!/usr/bin/env python3
"""Train loss rows a-d over several seeds and report per-row medians.

    python scripts/run_ablation.py --seeds 7 8 9 10 11 --out runs/ablation
"""

import argparse
import csv
import statistics
import time
from pathlib import Path

from jointcorr.loss import ABLATION_ROWS
from jointcorr.trainer import TrainConfig, moving_average, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[7, 8, 9, 10, 11])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--out", type=Path, default=Path("runs/ablation"))
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    per_run = []
    for seed in args.seeds:
        for row in ABLATION_ROWS:
            t0 = time.perf_counter()
            result = train(TrainConfig(seed=seed, steps=args.steps, loss_config=row))
            ma = moving_average(result.n_a, 200)
            rec = dict(seed=seed, row=row, initial_pck_raw=result.initial_pck_raw,
                       final_pck=result.final_pck, n_a_ma_first=ma[min(199, ma.size - 1)],
                       n_a_ma_last=ma[-1], seconds=time.perf_counter() - t0)
            per_run.append(rec)
            print(f"seed {seed} row {row}: {rec['initial_pck_raw']:.3f} -> "
                  f"{rec['final_pck']:.3f} ({rec['seconds']:.0f}s)", flush=True)

    with open(args.out / "runs.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(per_run[0]))
        writer.writeheader()
        writer.writerows(per_run)

    medians = {row: statistics.median(r["final_pck"] for r in per_run if r["row"] == row)
               for row in ABLATION_ROWS}
    with open(args.out / "medians.csv", "w") as fh:
        fh.write("row,terms,median_final_pck\n")
        for row, terms in ABLATION_ROWS.items():
            fh.write(f"{row},{'+'.join(sorted(terms))},{medians[row]!r}\n")
    print("medians: " + "  ".join(f"{r}={v:.3f}" for r, v in medians.items()))
    print(f"d >= c: {medians['d'] >= medians['c']}   b >= a: {medians['b'] >= medians['a']}")


if __name__ == "__main__":
    main()
