"""Central finite-difference checks of every hand-written backward pass.

Pseudo labels and masks are computed once at the unperturbed point and held
fixed, matching how the training loss treats them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .aggregation import Conv4dKernel, aggregate, aggregate_backward
from .consistency import ConsistencyParams, mask_and_flows
from .cost_volume import CostVolume, correlate, correlate_backward
from .features import (FeatureMap, ImageGrid, LinearProjector, extract_features,
                       extract_features_backward, l2_normalize)
from .geometry import GridShape
from .loss import LossParams, ccl_term
from .pipeline import Model

STEP = 1e-5


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max over entries of ``|a - n| / max(|a|, |n|, floor)``."""
    a, n = np.asarray(analytic, float), np.asarray(numeric, float)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def numeric_grad(f: Callable[[], float], x: np.ndarray, step: float = STEP,
                 indices=None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``x`` (perturbed in place, restored)."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat_x, flat_g = x.reshape(-1), grad.reshape(-1)
    for k in range(flat_x.size) if indices is None else indices:
        orig = flat_x[k]
        flat_x[k] = orig + step
        up = f()
        flat_x[k] = orig - step
        down = f()
        flat_x[k] = orig
        flat_g[k] = (up - down) / (2 * step)
    return grad


def _random_features(rng, shape: GridShape, d: int) -> FeatureMap:
    return l2_normalize(FeatureMap(shape, rng.standard_normal((shape.size, d))))


def check_ccl(rng: np.random.Generator, shape=GridShape(3, 3), gamma: float = 0.1) -> float:
    vol = CostVolume(shape, shape, rng.uniform(-1, 1, (shape.size, shape.size)))
    labels, _, mask = mask_and_flows(vol, ConsistencyParams(0.1, 0.05))
    _, grad = ccl_term(vol, labels, mask, gamma)
    num = numeric_grad(lambda: ccl_term(vol, labels, mask, gamma)[0], vol.values)
    return rel_error(grad, num)


def check_correlate(rng: np.random.Generator, shape=GridShape(3, 3), d: int = 4) -> float:
    ds, dt = _random_features(rng, shape, d), _random_features(rng, shape, d)
    probe = rng.standard_normal((shape.size, shape.size))
    g_s, g_t = correlate_backward(ds, dt, probe)
    f = lambda: float(np.sum(probe * correlate(ds, dt).values))
    return max(rel_error(g_s, numeric_grad(f, ds.values)),
               rel_error(g_t, numeric_grad(f, dt.values)))


def check_projector(rng: np.random.Generator, shape=GridShape(3, 3), channels: int = 3,
                    d: int = 4) -> float:
    img = ImageGrid(shape, rng.uniform(0, 1, (shape.size, channels)))
    proj = LinearProjector(rng.standard_normal((channels, d)), rng.standard_normal(d))
    probe = rng.standard_normal((shape.size, d))
    extract_features_backward(img, proj, probe)
    f = lambda: float(np.sum(probe * extract_features(img, proj).values))
    return max(rel_error(proj.weight_grad, numeric_grad(f, proj.weight)),
               rel_error(proj.bias_grad, numeric_grad(f, proj.bias)))


def check_conv4d(rng: np.random.Generator, shape=GridShape(3, 3), size: int = 3,
                 n_input_samples: int = 20) -> float:
    """Kernel weights, bias and a sample of input entries."""
    c = CostVolume(shape, shape, rng.uniform(-1, 1, (shape.size, shape.size)))
    kernel = Conv4dKernel(size, rng.standard_normal((size,) * 4) * 0.3, 0.1)
    probe = rng.standard_normal(c.values.shape)
    grad_c = aggregate_backward(c, kernel, probe)
    f = lambda: float(np.sum(probe * aggregate(c, kernel).values))
    bias = np.array([kernel.bias])

    def f_bias():
        kernel.bias = float(bias[0])
        return f()

    sample = rng.choice(c.values.size, size=min(n_input_samples, c.values.size), replace=False)
    num_c = numeric_grad(f, c.values, indices=sample)
    errs = [rel_error(kernel.weight_grad, numeric_grad(f, kernel.weights)),
            rel_error([kernel.bias_grad], numeric_grad(f_bias, bias)),
            rel_error(grad_c.reshape(-1)[sample], num_c.reshape(-1)[sample])]
    kernel.bias = float(bias[0])
    return max(errs)


def frozen_total(model: Model, source: ImageGrid, target: ImageGrid, labels: dict,
                 params_loss: LossParams) -> float:
    """Joint loss with pseudo labels/masks fixed to ``labels``."""
    fw = model.forward(source, target)
    (f_c, m_c), (f_a, m_a) = labels["c"], labels["a"]
    lc, la = params_loss.lambda_c, params_loss.lambda_a
    g = params_loss.gamma
    return (lc * (ccl_term(fw.c, f_c, m_c, g)[0] + ccl_term(fw.c, f_a, m_a, g)[0])
            + la * (ccl_term(fw.a, f_a, m_a, g)[0] + ccl_term(fw.a, f_c, m_c, g)[0]))


def check_end_to_end(rng: np.random.Generator, shape=GridShape(3, 3), channels: int = 3,
                     d: int = 4, gamma: float = 0.1) -> float:
    """Projector -> correlate -> aggregate -> joint loss, all parameters."""
    src = ImageGrid(shape, rng.uniform(0, 1, (shape.size, channels)))
    tgt = ImageGrid(shape, rng.uniform(0, 1, (shape.size, channels)))
    model = Model(LinearProjector(rng.standard_normal((channels, d)), 0.1 * rng.standard_normal(d)),
                  Conv4dKernel.init(rng, 3, 0.1))
    # keep the ReLU active almost everywhere so kinks do not sit inside the FD stencil
    model.kernel.bias = 1.0
    cons, lp = ConsistencyParams(0.1, 0.05), LossParams(gamma, 0.5, 0.5)
    fw = model.forward(src, tgt)
    f_c, _, m_c = mask_and_flows(fw.c, cons)
    f_a, _, m_a = mask_and_flows(fw.a, cons)
    labels = {"c": (f_c, m_c), "a": (f_a, m_a)}

    model.zero_grad()
    model.loss_and_backward(src, tgt, cons, lp)
    f = lambda: frozen_total(model, src, tgt, labels, lp)
    bias = np.array([model.kernel.bias])

    def f_bias():
        model.kernel.bias = float(bias[0])
        return f()

    errs = [rel_error(model.projector.weight_grad, numeric_grad(f, model.projector.weight)),
            rel_error(model.projector.bias_grad, numeric_grad(f, model.projector.bias)),
            rel_error(model.kernel.weight_grad, numeric_grad(f, model.kernel.weights)),
            rel_error([model.kernel.bias_grad], numeric_grad(f_bias, bias))]
    model.kernel.bias = float(bias[0])
    return max(errs)


@dataclass(frozen=True)
class GradcheckReport:
    ccl: float
    correlate: float
    projector: float
    conv4d: float
    end_to_end: float

    def rows(self):
        limits = {"end_to_end": 1e-3}
        for name in ("ccl", "correlate", "projector", "conv4d", "end_to_end"):
            yield name, getattr(self, name), limits.get(name, 1e-4)

    @property
    def ok(self) -> bool:
        return all(err < limit for _, err, limit in self.rows())


def run_all(seed: int = 0) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    return GradcheckReport(
        ccl=max(check_ccl(rng, gamma=g) for g in (0.07, 0.1, 1.0)),
        correlate=check_correlate(rng),
        projector=check_projector(rng),
        conv4d=check_conv4d(rng),
        end_to_end=check_end_to_end(rng),
    )
