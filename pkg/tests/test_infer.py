import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from spire.infer import (
    Detection, InferConfig, back_map, detect, detect_from_map, nms_local_max,
    select_candidates, stride_transform, subpixel_refine,
)
from spire.model import HrpeConfig, build_model
from spire.prps import PrpsConfig, build_supervision_map


def brute_local_max(grid):
    h, w = grid.shape
    out = np.zeros_like(grid)
    for v in range(h):
        for u in range(w):
            best = max(grid[j, i] for j in range(max(0, v - 1), min(h, v + 2))
                       for i in range(max(0, u - 1), min(w, u + 2)))
            if grid[v, u] == best:
                out[v, u] = grid[v, u]
    return out


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
              elements=st.sampled_from([0.0, 0.2, 0.5, 0.5, 0.9, 1.0, -0.3])))
def test_nms_matches_brute_force(grid):
    np.testing.assert_array_equal(nms_local_max(grid), brute_local_max(grid))


def test_nms_plateau_survives():
    grid = np.zeros((4, 4))
    grid[1, 1] = grid[1, 2] = 0.8
    kept = nms_local_max(grid)
    assert kept[1, 1] == kept[1, 2] == 0.8


def test_candidates_order_threshold_and_cap():
    grid = np.zeros((5, 5))
    grid[0, 4] = grid[3, 0] = 0.9      # tie: row 0 first
    grid[2, 2] = 0.95
    grid[4, 4] = 0.35                  # at tau, not above
    got = select_candidates(grid, InferConfig(tau=0.35))
    assert got == [(2, 2, 0.95), (4, 0, 0.9), (0, 3, 0.9)]
    assert len(select_candidates(grid, InferConfig(tau=0.35, max_detections=2))) == 2


@pytest.mark.parametrize("left,right,expected", [(0.2, 0.5, 0.25), (0.5, 0.2, -0.25), (0.3, 0.3, 0.0)])
def test_subpixel_sign_rule(left, right, expected):
    grid = np.zeros((3, 3))
    grid[1, 0], grid[1, 1], grid[1, 2] = left, 1.0, right
    du, dv = subpixel_refine(grid, 1, 1, 4)
    assert du == expected and dv == 0.0


def test_subpixel_zero_on_border():
    grid = np.random.default_rng(0).random((4, 4))
    assert subpixel_refine(grid, 0, 3, 4) == (0.0, 0.0)


def test_back_map_examples_and_errors():
    assert back_map(25.25, 15, stride_transform(4)) == pytest.approx((101, 60))
    t = np.array([[0.5, 0, -3], [0, 0.5, 2]])   # 2x3 form, scale plus offset
    assert back_map(2.0, 4.0, t) == pytest.approx((10, 4))
    with pytest.raises(ValueError, match="singular"):
        back_map(1, 1, np.zeros((3, 3)))


def test_detect_from_map_clamps_and_scores():
    grid = np.zeros((4, 4))
    grid[3, 3] = 1.7
    (d,) = detect_from_map(grid, 4)
    assert d.score == 1.0 and d.x == 12.0 and d.y == 12.0
    (d,) = detect_from_map(grid, 4, image_shape=(10, 11))
    assert d.x == 10.0 and d.y == 9.0
    assert (d.u0, d.v0) == (3, 3)
    with pytest.raises(ValueError):
        detect_from_map(grid, 4, InferConfig(tau=1.0))


def test_tau_monotonicity():
    grid = np.random.default_rng(1).random((20, 20))
    counts = [len(detect_from_map(grid, 4, InferConfig(tau=t))) for t in (0.1, 0.3, 0.6, 0.9)]
    assert counts == sorted(counts, reverse=True)


@settings(max_examples=40, deadline=None)
@given(st.floats(8, 55), st.floats(8, 55))
def test_round_trip_through_supervision_map(x, y):
    img = np.zeros((64, 64))
    grid = build_supervision_map(img, [(x, y)], PrpsConfig(mode="gaussian"))
    (d,) = detect_from_map(grid, 4)
    assert abs(d.x - x) <= 4 / 2 + 1 and abs(d.y - y) <= 4 / 2 + 1


def test_detect_with_model():
    model = build_model(HrpeConfig(stem_channels=4, bottleneck_mid=4, bottleneck_out=8,
                                   wide_units=1, trunk_channels=4, num_reorg_units=1), seed=0)
    dets = detect(model, np.random.default_rng(0).random((32, 32)), InferConfig(tau=0.0))
    assert all(isinstance(d, Detection) and 0 <= d.x <= 31 for d in dets)
