"""Confidence-aware contrastive losses on raw and aggregated cost volumes.

Four terms are combined; the first letter names the volume the pseudo labels
come from, the second the volume being scored::

    l_cc  labels from C, scored on C        l_ac  labels from A, scored on C
    l_aa  labels from A, scored on A        l_ca  labels from C, scored on A

    total = lambda_c * (l_cc + l_ac) + lambda_a * (l_aa + l_ca)

Labels and masks are treated as constants: no gradient flows through the
argmax or the consistency check.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from typing import Callable, Iterable

import numpy as np

from .consistency import ConfidenceMask, ConsistencyParams, FlowField, mask_and_flows
from .cost_volume import CostVolume
from .geometry import OUT_OF_GRID

TERMS = ("l_cc", "l_ac", "l_aa", "l_ca")

# Loss-component rows of the ablation table.
ABLATION_ROWS = {
    "a": frozenset({"l_aa"}),
    "b": frozenset({"l_aa", "l_ca"}),
    "c": frozenset({"l_cc", "l_aa"}),
    "d": frozenset(TERMS),
}

CSV_HEADER = "step,l_cc,l_ac,l_aa,l_ca,total,n_c,n_a"


@dataclass(frozen=True)
class LossParams:
    gamma: float = 0.1
    lambda_c: float = 0.5
    lambda_a: float = 0.5

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"temperature gamma must be > 0, got {self.gamma}")
        if self.lambda_c < 0 or self.lambda_a < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class LossReport:
    l_cc: float
    l_ac: float
    l_aa: float
    l_ca: float
    total: float
    n_c: int
    n_a: int

    def csv_row(self, step: int) -> str:
        vals = [repr(float(v)) for v in (self.l_cc, self.l_ac, self.l_aa, self.l_ca, self.total)]
        return ",".join([str(step), *vals, str(self.n_c), str(self.n_a)])

    @classmethod
    def from_csv_row(cls, line: str) -> tuple[int, "LossReport"]:
        parts = line.strip().split(",")
        if len(parts) != 8:
            raise ValueError(f"expected 8 fields, got {len(parts)}: {line!r}")
        step = int(parts[0])
        floats = [float(x) for x in parts[1:6]]
        return step, cls(*floats, int(parts[6]), int(parts[7]))

    def as_dict(self) -> dict:
        return {f.name: v for f, v in zip(fields(self), astuple(self))}


def _label_targets(vol: CostVolume, labels: FlowField, mask: ConfidenceMask) -> np.ndarray:
    if labels.shape != vol.shape_s or labels.target_shape != vol.shape_t:
        raise ValueError(f"labels {labels.shape}->{labels.target_shape} do not match volume "
                         f"{vol.shape_s}->{vol.shape_t}")
    if mask.shape != vol.shape_s:
        raise ValueError(f"mask grid {mask.shape} != volume source grid {vol.shape_s}")
    p = labels.targets()
    if np.any(p[mask.bits] == OUT_OF_GRID):
        raise ValueError("masked cell has a pseudo label outside the target grid")
    return p


def ccl_term(vol: CostVolume, labels: FlowField, mask: ConfidenceMask, gamma: float,
             softmax_hook: Callable[[np.ndarray], None] | None = None
             ) -> tuple[float, np.ndarray]:
    """Masked softmax cross-entropy of each row against its pseudo label.

    Returns the loss averaged over the ``mask.count`` reliable rows and its
    gradient w.r.t. ``vol.values``. An empty mask gives zero loss and gradient.
    ``softmax_hook`` receives the (masked rows x targets) softmax, for checks.
    """
    if not gamma > 0:
        raise ValueError(f"temperature gamma must be > 0, got {gamma}")
    if not np.all(np.isfinite(vol.values)):
        raise ValueError("cost volume has non-finite entries")
    p = _label_targets(vol, labels, mask)
    grad = np.zeros_like(vol.values)
    n = mask.count
    if n == 0:
        return 0.0, grad

    rows = np.flatnonzero(mask.bits)
    z = vol.values[rows] / gamma
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    pos = p[rows]
    loss = float(np.sum(lse - z[np.arange(rows.size), pos]) / n)

    sm = np.exp(z - lse[:, None])
    if softmax_hook is not None:
        softmax_hook(sm.copy())
    sm[np.arange(rows.size), pos] -= 1.0
    grad[rows] = sm / (gamma * n)
    return loss, grad


def ablation_loss(terms: Iterable[str], c_raw: CostVolume, c_agg: CostVolume,
                  params_cons: ConsistencyParams, params_loss: LossParams
                  ) -> tuple[LossReport, np.ndarray, np.ndarray]:
    """Weighted sum of the selected loss terms and its gradients.

    Unselected terms are reported as 0 and contribute no gradient. Returns
    ``(report, grad_raw, grad_agg)``.
    """
    terms = frozenset(terms)
    if not terms:
        raise ValueError("ablation config must select at least one loss term")
    unknown = terms - set(TERMS)
    if unknown:
        raise ValueError(f"unknown loss terms: {sorted(unknown)}")
    if c_raw.shape_s != c_agg.shape_s or c_raw.shape_t != c_agg.shape_t:
        raise ValueError("raw and aggregated volumes must share grid shapes")

    f_c, _, m_c = mask_and_flows(c_raw, params_cons)
    f_a, _, m_a = mask_and_flows(c_agg, params_cons)
    plan = {
        "l_cc": (c_raw, f_c, m_c),
        "l_ac": (c_raw, f_a, m_a),
        "l_aa": (c_agg, f_a, m_a),
        "l_ca": (c_agg, f_c, m_c),
    }
    values = dict.fromkeys(TERMS, 0.0)
    grad_raw = np.zeros_like(c_raw.values)
    grad_agg = np.zeros_like(c_agg.values)
    for name in TERMS:
        if name not in terms:
            continue
        vol, labels, mask = plan[name]
        values[name], g = ccl_term(vol, labels, mask, params_loss.gamma)
        if name in ("l_cc", "l_ac"):
            grad_raw += params_loss.lambda_c * g
        else:
            grad_agg += params_loss.lambda_a * g

    total = (params_loss.lambda_c * (values["l_cc"] + values["l_ac"])
             + params_loss.lambda_a * (values["l_aa"] + values["l_ca"]))
    report = LossReport(values["l_cc"], values["l_ac"], values["l_aa"], values["l_ca"],
                        total, m_c.count, m_a.count)
    return report, grad_raw, grad_agg


def joint_loss(c_raw: CostVolume, c_agg: CostVolume, params_cons: ConsistencyParams,
               params_loss: LossParams) -> tuple[LossReport, np.ndarray, np.ndarray]:
    return ablation_loss(TERMS, c_raw, c_agg, params_cons, params_loss)
