#!/usr/bin/env python3
"""Single default training run with a short text summary of its curves.

    python scripts/run_training.py --seed 7 --out runs/seed7
"""

import argparse
from pathlib import Path

from jointcorr.trainer import TrainConfig, moving_average, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--loss-config", default="d", choices="abcd")
    ap.add_argument("--out", type=Path, default=Path("runs/training"))
    args = ap.parse_args()

    cfg = TrainConfig(seed=args.seed, steps=args.steps, loss_config=args.loss_config)
    result = train(cfg, args.out)
    ma_a, ma_c = moving_average(result.n_a, 200), moving_average(result.n_c, 200)
    print(f"PCK@{cfg.eval_alpha}: untrained raw {result.initial_pck_raw:.3f}, "
          f"trained aggregated {result.final_pck:.3f}")
    print("step   N^C(ma200)  N^A(ma200)")
    for step in range(200, cfg.steps + 1, 200):
        print(f"{step:5d}  {ma_c[step - 1]:10.1f}  {ma_a[step - 1]:10.1f}")
    print(f"logs and checkpoints in {args.out}")


if __name__ == "__main__":
    main()
