"""Command-line entry point: train, eval, inspect, gradcheck, ablate.

Exit codes: 0 success, 1 usage error, 2 numeric failure (divergence or a
failed gradient check).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .consistency import mask_and_flows
from .evaluation import EVAL_HEADER, eval_row, warp
from .gradcheck import run_all
from .loss import ABLATION_ROWS
from .optim import DivergenceError
from .pipeline import Model
from .synthetic import generate_pair
from .trainer import TrainConfig, evaluate_model, heldout_pairs, init_model, train

log = logging.getLogger("jointcorr")

EVAL_ALPHAS = (0.05, 0.1, 0.15)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value config file")
    common.add_argument("--out", type=Path, default=Path("runs/default"), help="output directory")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="config override (repeatable, last wins)")

    parser = _Parser(prog="jointcorr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="train projector and aggregator")
    p_eval = sub.add_parser("eval", parents=[common], help="PCK table for saved checkpoints")
    p_eval.add_argument("--checkpoint", type=Path, help="directory with projector.bin/kernel.bin "
                                                        "(defaults to --out)")
    p_insp = sub.add_parser("inspect", parents=[common], help="dump volumes, flows and masks")
    p_insp.add_argument("--checkpoint", type=Path, help="optional trained checkpoint directory")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    sub.add_parser("ablate", parents=[common], help="train loss rows a-d on one seed")
    return parser


def load_config(args) -> TrainConfig:
    values = {}
    if args.config is not None:
        if not args.config.is_file():
            raise UsageError(f"config file not found: {args.config}")
        values.update(io.read_config(args.config))
    for text in args.overrides:
        try:
            key, value = io.parse_override(text)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        values[key] = value
    if args.seed is not None:
        values["seed"] = str(args.seed)
    try:
        return TrainConfig.from_mapping(values)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from exc


def load_model(ckpt: Path) -> Model:
    from .aggregation import Conv4dKernel

    if not (ckpt / "projector.bin").is_file() or not (ckpt / "kernel.bin").is_file():
        raise UsageError(f"no checkpoints in {ckpt}")
    return Model(io.load_projector(ckpt / "projector.bin"), Conv4dKernel.load(ckpt / "kernel.bin"))


def cmd_train(cfg: TrainConfig, args) -> int:
    result = train(cfg, args.out)
    print(f"initial raw PCK@{cfg.eval_alpha}: {result.initial_pck_raw:.4f}")
    print(f"final aggregated PCK@{cfg.eval_alpha}: {result.final_pck:.4f}")
    print(f"wrote {args.out}/metrics.csv, pck.csv, projector.bin, kernel.bin")
    return 0


def cmd_eval(cfg: TrainConfig, args) -> int:
    model = load_model(args.checkpoint or args.out)
    if model.projector.in_features != cfg.channels:
        raise UsageError(f"checkpoint expects {model.projector.in_features} channels, "
                         f"config has {cfg.channels}")
    pairs = heldout_pairs(cfg)
    rows = {"aggregated": [], "raw": []}
    for alpha in EVAL_ALPHAS:
        for name, (res, epe) in evaluate_model(model, pairs, alpha).items():
            rows[name].append(eval_row(res, epe))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "eval.csv").write_text("\n".join([EVAL_HEADER, *rows["aggregated"]]) + "\n")
    (args.out / "eval_raw.csv").write_text("\n".join([EVAL_HEADER, *rows["raw"]]) + "\n")
    for name in ("raw", "aggregated"):
        print(f"[{name}]")
        print(EVAL_HEADER)
        print("\n".join(rows[name]))
    return 0


def cmd_inspect(cfg: TrainConfig, args) -> int:
    rng = np.random.default_rng(cfg.seed)
    model = init_model(cfg, rng)
    if args.checkpoint is not None:
        model = load_model(args.checkpoint)
    pair = generate_pair(np.random.default_rng(cfg.seed + 1), cfg.shape, cfg.channels, cfg.warp)
    fw = model.forward(pair.source, pair.target)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_image_csv(pair.source, out / "source.csv")
    io.write_image_csv(pair.target, out / "target.csv")
    io.write_flow_csv(pair.gt_flow, out / "flow_gt.csv")
    io.write_mask_pgm(pair.valid, out / "valid.pgm")
    for tag, vol in (("raw", fw.c), ("agg", fw.a)):
        fwd, bwd, mask = mask_and_flows(vol, cfg.consistency)
        io.write_volume_csv(vol, out / f"cost_{tag}.csv")
        io.write_flow_csv(fwd, out / f"flow_{tag}_fwd.csv")
        io.write_flow_csv(bwd, out / f"flow_{tag}_bwd.csv")
        io.write_mask_pgm(mask, out / f"mask_{tag}.pgm")
        # target pulled back onto the source grid along the predicted flow
        io.write_image_csv(warp(pair.target, fwd), out / f"warped_{tag}.csv")
        print(f"{tag}: confident cells {mask.count}/{mask.shape.size}")
    print(f"wrote inspection dump to {out}")
    return 0


def cmd_gradcheck(cfg: TrainConfig, args) -> int:
    report = run_all(cfg.seed)
    for name, err, limit in report.rows():
        status = "ok" if err < limit else "FAIL"
        print(f"{name:12s} max rel err {err:.3e}  (limit {limit:.0e})  {status}")
    return 0 if report.ok else 2


def cmd_ablate(cfg: TrainConfig, args) -> int:
    lines = ["row,terms,initial_pck_raw,final_pck"]
    finals = {}
    for row, terms in ABLATION_ROWS.items():
        cfg_row = TrainConfig.from_mapping({"loss_config": row}, cfg)
        result = train(cfg_row)
        finals[row] = result.final_pck
        lines.append(f"{row},{'+'.join(sorted(terms))},{result.initial_pck_raw!r},"
                     f"{result.final_pck!r}")
        print(f"({row}) {' + '.join(sorted(terms)):24s} PCK@{cfg.eval_alpha} = {result.final_pck:.4f}")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "ablation.csv").write_text("\n".join(lines) + "\n")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "inspect": cmd_inspect,
            "gradcheck": cmd_gradcheck, "ablate": cmd_ablate}


def run(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args)
        return COMMANDS[args.verb](cfg, args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
