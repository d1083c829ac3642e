"""Projector -> correlation -> aggregation -> loss, with a hand-written backward."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .aggregation import Conv4dKernel, aggregate, aggregate_backward
from .consistency import ConsistencyParams, FlowField, wta_flow
from .cost_volume import CostVolume, correlate, correlate_backward
from .features import (FeatureMap, ImageGrid, LinearProjector, extract_features,
                       extract_features_backward, l2_normalize, l2_normalize_backward)
from .loss import TERMS, LossParams, LossReport, ablation_loss


@dataclass
class Forward:
    raw_s: FeatureMap
    raw_t: FeatureMap
    ds: FeatureMap
    dt: FeatureMap
    c: CostVolume
    a: CostVolume


@dataclass
class Model:
    projector: LinearProjector
    kernel: Conv4dKernel

    def zero_grad(self):
        self.projector.zero_grad()
        self.kernel.zero_grad()

    def forward(self, source: ImageGrid, target: ImageGrid) -> Forward:
        raw_s = extract_features(source, self.projector)
        raw_t = extract_features(target, self.projector)
        ds, dt = l2_normalize(raw_s), l2_normalize(raw_t)
        c = correlate(ds, dt)
        return Forward(raw_s, raw_t, ds, dt, c, aggregate(c, self.kernel))

    def predict(self, source: ImageGrid, target: ImageGrid) -> tuple[FlowField, FlowField]:
        """WTA flows from the raw and the aggregated volume."""
        fw = self.forward(source, target)
        return wta_flow(fw.c), wta_flow(fw.a)

    def loss_and_backward(self, source: ImageGrid, target: ImageGrid,
                          params_cons: ConsistencyParams, params_loss: LossParams,
                          terms: Iterable[str] = TERMS) -> LossReport:
        """Evaluate the loss and accumulate gradients into projector and kernel."""
        fw = self.forward(source, target)
        report, g_raw, g_agg = ablation_loss(terms, fw.c, fw.a, params_cons, params_loss)
        g_c = g_raw
        if np.any(g_agg):
            g_c = g_c + aggregate_backward(fw.c, self.kernel, g_agg)
        g_ds, g_dt = correlate_backward(fw.ds, fw.dt, g_c)
        extract_features_backward(source, self.projector, l2_normalize_backward(fw.raw_s, g_ds))
        extract_features_backward(target, self.projector, l2_normalize_backward(fw.raw_t, g_dt))
        return report
