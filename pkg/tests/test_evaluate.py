import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from spire import io
from spire.evaluate import (
    Matching, compute_metrics, evaluate_dataset, mask_to_centroids, match_centroids, prf,
)


def exhaustive_best(preds, gts, delta):
    """(cardinality, total distance) of the best one-to-one matching by enumeration."""
    best = (0, 0.0)
    n, m = len(preds), len(gts)
    for k in range(min(n, m), 0, -1):
        found = None
        for ps in itertools.permutations(range(n), k):
            for gs in itertools.combinations(range(m), k):
                ds = [math.dist(preds[p], gts[g]) for p, g in zip(ps, gs)]
                if max(ds) <= delta:
                    tot = sum(ds)
                    found = tot if found is None else min(found, tot)
        if found is not None:
            return k, found
    return best


point = st.tuples(st.integers(0, 12).map(float), st.integers(0, 12).map(float))


@settings(max_examples=150, deadline=None)
@given(st.lists(point, max_size=5), st.lists(point, max_size=5))
def test_matcher_equals_exhaustive(preds, gts):
    m = match_centroids(preds, gts, 5.0)
    k, tot = exhaustive_best(preds, gts, 5.0)
    assert m.tp == k
    assert sum(d for _, _, d in m.pairs) == pytest.approx(tot, abs=1e-9)
    assert len({p for p, _, _ in m.pairs}) == m.tp == len({g for _, g, _ in m.pairs})


def test_boundary_distance_counts():
    assert match_centroids([(0, 0)], [(3, 4)], 5).tp == 1
    assert match_centroids([(0, 0)], [(3, 4.0001)], 5).tp == 0


def test_cardinality_beats_distance():
    # greedy nearest would pair p0-g0 (distance 1) and strand g1
    preds = [(0, 0), (5, 0)]
    gts = [(1, 0), (-4, 0)]
    m = match_centroids(preds, gts, 5)
    assert m.tp == 2


def test_empty_sides_and_bad_delta():
    assert match_centroids([], [(1, 1)]).fn == 1
    assert match_centroids([(1, 1)], []).fp == 1
    with pytest.raises(ValueError):
        match_centroids([(0, 0)], [(0, 0)], 0)


def test_prf_conventions():
    assert prf(0, 0, 0) == (1.0, 1.0, 1.0)
    assert prf(0, 0, 3) == (0.0, 0.0, 0.0)
    assert prf(0, 2, 0) == (0.0, 1.0, 0.0)
    p, r, f = prf(3, 1, 2)
    assert (p, r) == (0.75, 0.6) and f == pytest.approx(2 * 0.75 * 0.6 / 1.35)


def test_metrics_arithmetic():
    ms = [Matching([(0, 0, 1.0)], 2, 1), Matching([], 1, 2)]
    rep = compute_metrics(ms, [(256, 512), (256, 512)], ["a", "b"])
    assert (rep.tp, rep.fp, rep.fn) == (1, 2, 2)
    assert rep.fa == 2 / 262144
    d = rep.to_dict()
    assert d["fa_1e-8"] == pytest.approx(2 / 262144 * 1e8)
    assert d["num_images"] == 2 and d["per_image"][1]["image_id"] == "b"
    with pytest.raises(ValueError):
        compute_metrics([], [])


def flood_components(mask):
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for y in range(h):
        for x in range(w):
            if mask[y, x] and not seen[y, x]:
                stack, pts = [(y, x)], []
                seen[y, x] = True
                while stack:
                    cy, cx = stack.pop()
                    pts.append((cx, cy))
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx = cy + dy, cx + dx
                            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                                seen[ny, nx] = True
                                stack.append((ny, nx))
                comps.append((float(np.mean([p[0] for p in pts])), float(np.mean([p[1] for p in pts]))))
    return comps


@settings(max_examples=60, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 10), st.integers(1, 10)), elements=st.integers(0, 1)))
def test_mask_components_match_flood_fill(mask):
    got = sorted(mask_to_centroids(mask))
    want = sorted(flood_components(mask))
    assert len(got) == len(want)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_mask_diagonal_is_connected_and_binary_required():
    assert len(mask_to_centroids(np.eye(3, dtype=int))) == 1
    with pytest.raises(ValueError):
        mask_to_centroids(np.array([[2]]))


def _write_case(tmp_path, pred_rows, gt_rows):
    manifest = {"scenes": [{"image_id": "a", "height": 64, "width": 64},
                           {"image_id": "b", "height": 64, "width": 64}]}
    io.write_points_csv(tmp_path / "p.csv", pred_rows, with_score=True)
    io.write_points_csv(tmp_path / "g.csv", gt_rows)
    return manifest


def test_evaluate_dataset_row_order_invariant(tmp_path):
    preds = [("a", 10, 10, 0.9), ("a", 12, 10, 0.8), ("b", 40, 40, 0.5), ("a", 50, 50, 0.4)]
    gts = [("a", 11, 10), ("b", 41, 41), ("a", 30, 30)]
    man = _write_case(tmp_path, preds, gts)
    one = evaluate_dataset(tmp_path / "p.csv", tmp_path / "g.csv", man)
    _write_case(tmp_path, preds[::-1], gts[::-1])
    two = evaluate_dataset(tmp_path / "p.csv", tmp_path / "g.csv", man)
    assert one == two
    assert (one["tp"], one["fp"], one["fn"]) == (2, 2, 1)
    assert one["config"]["delta"] == 5.0


def test_evaluate_dataset_empty_images_and_unknown_ids(tmp_path):
    man = _write_case(tmp_path, [], [])
    rep = evaluate_dataset(tmp_path / "p.csv", tmp_path / "g.csv", man)
    assert rep["f1"] == 1.0 and rep["fa"] == 0.0 and rep["num_pixels"] == 2 * 64 * 64
    _write_case(tmp_path, [("zzz", 1, 1, 0.5)], [])
    with pytest.raises(KeyError):
        evaluate_dataset(tmp_path / "p.csv", tmp_path / "g.csv", man)
