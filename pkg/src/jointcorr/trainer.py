"""Joint training of the feature projector and the 4D aggregation kernel."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .aggregation import Conv4dKernel
from .consistency import ConsistencyParams
from .evaluation import PckResult, endpoint_error, pck
from .features import LinearProjector
from .geometry import GridShape
from .loss import ABLATION_ROWS, CSV_HEADER, LossParams, LossReport
from .optim import AdamW, DivergenceError
from .pipeline import Model
from .synthetic import SyntheticPair, WarpParams, generate_pair

log = logging.getLogger(__name__)

PCK_HEADER = "step,volume,alpha,correct,total,pck,mean_epe"


@dataclass
class TrainConfig:
    seed: int = 7
    steps: int = 2000
    h: int = 16
    w: int = 16
    dim: int = 4
    channels: int = 16
    lr_feature: float = 3e-5
    lr_agg: float = 3e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    gamma: float = 0.1
    lambda_c: float = 0.5
    lambda_a: float = 0.5
    alpha1: float = 0.1
    alpha2: float = 0.05
    loss_config: str = "d"
    kernel_size: int = 3
    kernel_noise: float = 0.01
    init_scale: float = 0.02
    eval_every: int = 100
    eval_pairs: int = 32
    eval_alpha: float = 0.1
    max_translation: int = 3
    affine_std: float = 0.1
    jitter_prob: float = 0.1
    noise: float = 0.05
    smoothness: float = 1.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.lr_feature < 0 or self.lr_agg < 0:
            raise ValueError("learning rates must be nonnegative")
        if self.loss_config not in ABLATION_ROWS:
            raise ValueError(f"loss_config must be one of {sorted(ABLATION_ROWS)}, "
                             f"got {self.loss_config!r}")

    @property
    def shape(self) -> GridShape:
        return GridShape(self.h, self.w)

    @property
    def consistency(self) -> ConsistencyParams:
        return ConsistencyParams(self.alpha1, self.alpha2)

    @property
    def loss(self) -> LossParams:
        return LossParams(self.gamma, self.lambda_c, self.lambda_a)

    @property
    def warp(self) -> WarpParams:
        return WarpParams(self.max_translation, self.affine_std, self.jitter_prob,
                          self.noise, self.smoothness)

    @classmethod
    def from_mapping(cls, values: dict[str, str], base: "TrainConfig | None" = None) -> "TrainConfig":
        """Build from string key/values (config file or ``--set`` overrides)."""
        base = cls() if base is None else base
        types = {f.name: f.type for f in fields(cls)}
        updates = {}
        for key, raw in values.items():
            if key not in types:
                raise KeyError(f"unknown config key {key!r}")
            updates[key] = _coerce(types[key], raw)
        return replace(base, **updates)


def _coerce(type_name, raw):
    if not isinstance(raw, str):
        return raw
    if type_name in ("int", int):
        return int(raw)
    if type_name in ("float", float):
        return float(raw)
    return raw


def init_model(cfg: TrainConfig, rng: np.random.Generator) -> Model:
    proj = LinearProjector.init(rng, cfg.channels, cfg.dim, cfg.init_scale)
    kernel = Conv4dKernel.init(rng, cfg.kernel_size, cfg.kernel_noise)
    return Model(proj, kernel)


def heldout_pairs(cfg: TrainConfig) -> list[SyntheticPair]:
    rng = np.random.default_rng(cfg.seed + 1)
    return [generate_pair(rng, cfg.shape, cfg.channels, cfg.warp) for _ in range(cfg.eval_pairs)]


def evaluate_model(model: Model, pairs: list[SyntheticPair], alpha: float = 0.1
                   ) -> dict[str, tuple[PckResult, float]]:
    """Pooled PCK and mean endpoint error over ``pairs`` for both volumes."""
    out = {}
    correct = {"raw": 0, "aggregated": 0}
    total = 0
    epe = {"raw": 0.0, "aggregated": 0.0}
    for pair in pairs:
        flows = dict(zip(("raw", "aggregated"), model.predict(pair.source, pair.target)))
        total += pair.valid.count
        for name, flow in flows.items():
            correct[name] += pck(flow, pair.gt_flow, pair.valid, alpha).correct
            epe[name] += endpoint_error(flow, pair.gt_flow, pair.valid) * pair.valid.count
    for name in correct:
        out[name] = (PckResult(alpha, correct[name], total), epe[name] / total)
    return out


@dataclass
class TrainResult:
    model: Model
    config: TrainConfig
    reports: list[LossReport] = field(default_factory=list)
    pck_rows: list[str] = field(default_factory=list)
    initial_pck_raw: float = math.nan
    final_pck: float = math.nan

    def metrics_csv(self) -> str:
        lines = [CSV_HEADER] + [r.csv_row(i) for i, r in enumerate(self.reports)]
        return "\n".join(lines) + "\n"

    def pck_csv(self) -> str:
        return "\n".join([PCK_HEADER, *self.pck_rows]) + "\n"

    @property
    def n_a(self) -> np.ndarray:
        return np.array([r.n_a for r in self.reports])

    @property
    def n_c(self) -> np.ndarray:
        return np.array([r.n_c for r in self.reports])


def train(cfg: TrainConfig, out_dir: str | Path | None = None) -> TrainResult:
    """Run ``cfg.steps`` single-pair updates; optionally write logs/checkpoints.

    The final PCK is measured with WTA on the aggregated volume; the step-0
    baseline uses WTA on the raw volume of the untrained projector.
    """
    rng = np.random.default_rng(cfg.seed)
    model = init_model(cfg, rng)
    evalset = heldout_pairs(cfg)
    terms = ABLATION_ROWS[cfg.loss_config]
    betas = (cfg.beta1, cfg.beta2)
    opt_feat = AdamW(cfg.lr_feature, betas, cfg.eps, cfg.weight_decay)
    opt_agg = AdamW(cfg.lr_agg, betas, cfg.eps, cfg.weight_decay)
    result = TrainResult(model, cfg)

    def record(step):
        stats = evaluate_model(model, evalset, cfg.eval_alpha)
        for name, (res, epe) in stats.items():
            result.pck_rows.append(f"{step},{name},{res.alpha!r},{res.correct},{res.total},"
                                   f"{res.pck!r},{epe!r}")
        return stats

    stats = record(0)
    result.initial_pck_raw = stats["raw"][0].pck
    kbias = np.array([model.kernel.bias])
    for step in range(cfg.steps):
        pair = generate_pair(rng, cfg.shape, cfg.channels, cfg.warp)
        model.zero_grad()
        report = model.loss_and_backward(pair.source, pair.target, cfg.consistency,
                                         cfg.loss, terms)
        if not math.isfinite(report.total):
            raise DivergenceError(f"diverged: non-finite loss at step {step}: {report}")
        result.reports.append(report)
        opt_feat.step({"weight": (model.projector.weight, model.projector.weight_grad),
                       "bias": (model.projector.bias, model.projector.bias_grad)})
        opt_agg.step({"weights": (model.kernel.weights, model.kernel.weight_grad),
                      "bias": (kbias, np.array([model.kernel.bias_grad]))})
        model.kernel.bias = float(kbias[0])
        if (step + 1) % cfg.eval_every == 0 or step + 1 == cfg.steps:
            stats = record(step + 1)
            log.info("step %d total=%.4f n_c=%d n_a=%d pck_raw=%.3f pck_agg=%.3f",
                     step + 1, report.total, report.n_c, report.n_a,
                     stats["raw"][0].pck, stats["aggregated"][0].pck)
    result.final_pck = stats["aggregated"][0].pck

    if out_dir is not None:
        write_outputs(result, Path(out_dir))
    return result


def write_outputs(result: TrainResult, out_dir: Path):
    from .io import save_projector

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.csv").write_text(result.metrics_csv())
    (out_dir / "pck.csv").write_text(result.pck_csv())
    save_projector(result.model.projector, out_dir / "projector.bin")
    result.model.kernel.save(out_dir / "kernel.bin")


def moving_average(x: np.ndarray, window: int = 200) -> np.ndarray:
    """Trailing mean; entry k averages x[k-window+1 .. k] (shorter at the start)."""
    x = np.asarray(x, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)
