import numpy as np
import pytest
from hypothesis import given, strategies as st

from jointcorr.consistency import ConfidenceMask, FlowField
from jointcorr.evaluation import endpoint_error, pck, warp
from jointcorr.features import ImageGrid
from jointcorr.geometry import GridShape

import oracles


def _flow(shape, vec):
    return FlowField(shape, np.tile(np.asarray(vec), (shape.size, 1)))


@pytest.mark.parametrize("alpha", [0.0, 0.05, 0.1, 1.0])
def test_exact_prediction(alpha):
    rng = np.random.default_rng(0)
    s = GridShape(4, 5)
    gt = FlowField(s, rng.integers(-2, 3, (20, 2)))
    assert pck(gt, gt, ConfidenceMask.full(s), alpha).pck == 1.0


def test_one_cell_offset_inside_threshold():
    s = GridShape(16, 16)
    gt = FlowField.zeros(s)
    res = pck(_flow(s, (0, 1)), gt, ConfidenceMask.full(s), 0.1)
    assert (res.correct, res.total, res.pck) == (256, 256, 1.0)
    assert pck(_flow(s, (0, 2)), gt, ConfidenceMask.full(s), 0.1).pck == 0.0


def test_random_against_brute_force():
    rng = np.random.default_rng(1)
    s = GridShape(5, 5)
    pred, gt = rng.integers(-3, 4, (25, 2)), rng.integers(-3, 4, (25, 2))
    valid = rng.random(25) < 0.8
    for alpha in (0.05, 0.1, 0.3):
        res = pck(FlowField(s, pred), FlowField(s, gt), ConfidenceMask(s, valid), alpha)
        assert (res.correct, res.total) == oracles.pck_count(pred.tolist(), gt.tolist(),
                                                             valid.tolist(), 5, 5, alpha)


def test_no_evaluable_cells():
    s = GridShape(2, 2)
    with pytest.raises(ValueError, match="no evaluable cells"):
        pck(FlowField.zeros(s), FlowField.zeros(s), ConfidenceMask.full(s, False))
    with pytest.raises(ValueError):
        endpoint_error(FlowField.zeros(s), FlowField.zeros(s), ConfidenceMask.full(s, False))


@given(st.integers(0, 2**31 - 1))
def test_pck_bounded_and_monotone_in_alpha(seed):
    rng = np.random.default_rng(seed)
    s = GridShape(int(rng.integers(1, 7)), int(rng.integers(1, 7)))
    pred = FlowField(s, rng.integers(-6, 7, (s.size, 2)))
    gt = FlowField(s, rng.integers(-6, 7, (s.size, 2)))
    valid = ConfidenceMask.full(s)
    values = [pck(pred, gt, valid, a).pck for a in np.linspace(0, 3, 13)]
    assert all(0 <= v <= 1 for v in values)
    assert all(b >= a for a, b in zip(values, values[1:]))
    # errors are at most 12*sqrt(2) < 17 cells; alpha*max(h,w) >= 17 covers them
    assert pck(pred, gt, valid, 17.0 / max(s.h, s.w)).pck == 1.0


def test_endpoint_error_examples():
    s = GridShape(3, 3)
    gt = FlowField.zeros(s)
    full = ConfidenceMask.full(s)
    assert endpoint_error(gt, gt, full) == 0.0
    assert endpoint_error(_flow(s, (3, 4)), gt, full) == 5.0


def test_endpoint_error_naive_loop():
    rng = np.random.default_rng(2)
    s = GridShape(4, 4)
    p, g = rng.integers(-3, 4, (16, 2)), rng.integers(-3, 4, (16, 2))
    valid = rng.random(16) < 0.7
    valid[0] = True
    errs = [np.hypot(*(p[i] - g[i])) for i in range(16) if valid[i]]
    got = endpoint_error(FlowField(s, p), FlowField(s, g), ConfidenceMask(s, valid))
    assert got == pytest.approx(sum(errs) / len(errs), abs=1e-12)


class TestWarp:
    def test_zero_flow_identity(self):
        img = ImageGrid(GridShape(3, 4), np.random.default_rng(3).standard_normal((12, 3)))
        np.testing.assert_array_equal(warp(img, FlowField.zeros(img.shape)).values, img.values)

    def test_column_shift_with_zero_fill(self):
        arr = np.arange(12.0).reshape(3, 4)
        out = warp(ImageGrid.from_array(arr), _flow(GridShape(3, 4), (0, 1))).as_array()[:, :, 0]
        np.testing.assert_array_equal(out[:, :3], arr[:, 1:])
        np.testing.assert_array_equal(out[:, 3], 0.0)

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(4)
        img = ImageGrid(GridShape(4, 4), rng.standard_normal((16, 2)))
        s = img.shape
        there = warp(warp(img, _flow(s, (1, -1))), _flow(s, (-1, 1)))
        # cells whose two-hop path stays on the grid are restored
        rows, cols = np.divmod(np.arange(16), 4)
        ok = (rows >= 1) & (cols <= 2)
        np.testing.assert_array_equal(there.values[ok], img.values[ok])
