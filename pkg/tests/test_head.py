import logging
import math

import numpy as np
import pytest

from pcground.autodiff import Tensor
from pcground.checks import edge_oracle, roundtrip_oracle
from pcground.geometry import Box3D, anchor_point, corner_points, nearest_edge
from pcground.gradcheck import grad_check
from pcground.head import N_REG, HeadNet, anchor_cell, build_targets, decode, head_forward
from pcground.oracles import brute_edge_distances
from pcground.pillars import GridSpec


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def test_unit_cube_corners():
    pts = corner_points(Box3D(0, 0, 0, 1, 1, 1, 0))
    assert sorted(map(tuple, pts)) == sorted((x, y, z) for x in (-.5, .5) for y in (-.5, .5) for z in (-.5, .5))


def test_corners_match_rotation_matrix():
    rng = np.random.default_rng(0)
    for _ in range(200):
        b = Box3D(*rng.uniform(-20, 20, 3), *rng.uniform(0.5, 5, 3), rng.uniform(-math.pi, math.pi))
        local = np.array([[sx * b.l / 2, sy * b.w / 2] for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1))])
        expect = local @ rotation(b.yaw).T + [b.x, b.y]
        np.testing.assert_allclose(corner_points(b)[:4, :2], expect, atol=1e-9)
        np.testing.assert_allclose(corner_points(b)[:, 2], [b.z - b.h / 2] * 4 + [b.z + b.h / 2] * 4)


def test_head_on_box_anchors_at_edge_midpoint():
    ne = nearest_edge(Box3D(10, 0, 0, 4, 2, 1, 0))
    np.testing.assert_allclose(sorted(map(tuple, ne.edge)), [(8, -1), (8, 1)], atol=1e-12)
    np.testing.assert_allclose(ne.anchor, (8, 0), atol=1e-12)


def test_offset_box_anchors_at_corner():
    np.testing.assert_allclose(anchor_point(Box3D(10, 5, 0, 4, 2, 1, 0)), (8, 4), atol=1e-12)


def test_center_anchor_mode():
    np.testing.assert_array_equal(anchor_point(Box3D(3, 4, 0, 1, 1, 1), "center"), (3, 4))
    with pytest.raises(ValueError):
        anchor_point(Box3D(3, 4, 0, 1, 1, 1), "corner")


def test_nearest_edge_against_enumeration():
    ok, detail = edge_oracle(seed=1, cases=2000, symmetric=100)
    assert ok, detail


def test_nearest_edge_is_no_farther_than_any_edge():
    rng = np.random.default_rng(2)
    for _ in range(500):
        b = Box3D(*rng.uniform(-30, 30, 2), 0, *rng.uniform(0.5, 5, 3), rng.uniform(-4, 4))
        d = nearest_edge(b).distance
        assert all(d <= e + 1e-12 for e, _, _ in brute_edge_distances(b))


def test_rotation_equivariance():
    rng = np.random.default_rng(3)
    for _ in range(300):
        b = Box3D(*rng.uniform(-30, 30, 2), 0, *rng.uniform(0.5, 5, 3), rng.uniform(-math.pi, math.pi))
        theta = float(rng.uniform(-math.pi, math.pi))
        R = rotation(theta)
        x, y = R @ [b.x, b.y]
        rb = Box3D(x, y, b.z, b.l, b.w, b.h, b.yaw + theta)
        np.testing.assert_allclose(anchor_point(rb), R @ anchor_point(b), atol=1e-9)
        np.testing.assert_allclose(nearest_edge(rb).distance, nearest_edge(b).distance, atol=1e-9)


def test_nearest_edge_is_no_farther_than_center():
    rng = np.random.default_rng(4)
    for _ in range(2000):
        b = Box3D(*rng.uniform(-40, 40, 2), 0, *rng.uniform(0.5, 6, 2), 1.5, rng.uniform(-4, 4))
        ne = nearest_edge(b)
        if not ne.sensor_inside:
            assert ne.distance <= math.hypot(b.x, b.y) + 1e-12


def test_endpoint_anchor_can_lie_beyond_center():
    # a long box seen from its side: the nearer endpoint of the near edge is
    # still farther from the sensor than the center is
    b = Box3D(1, 5, 0, 10, 1, 1, 0)
    assert np.hypot(*anchor_point(b)) > math.hypot(b.x, b.y)
    assert nearest_edge(b).distance < math.hypot(b.x, b.y)


def test_single_box_peak_is_exactly_one_at_anchor_cell():
    grid = GridSpec()
    b = Box3D(20, 3, 0, 4, 2, 1.5, 0.4)
    t = build_targets([b], grid)
    r, c, _, _ = anchor_cell(anchor_point(b), grid)
    assert np.unravel_index(np.argmax(t.heatmap[0]), t.heatmap[0].shape) == (r, c)
    assert t.heatmap[0, r, c] == 1.0
    assert t.peaks == [(r, c)]


def test_regression_layout_at_peak():
    grid = GridSpec()
    b = Box3D(20, 3, -0.5, 4, 2, 1.5, 0.4)
    t = build_targets([b], grid)
    v = t.peak_values[0]
    a = anchor_point(b)
    assert v.shape == (N_REG,)
    np.testing.assert_allclose(v[2:4], [b.x - a[0], b.y - a[1]])
    np.testing.assert_allclose(v[4:], [-0.5, math.log(4), math.log(2), math.log(1.5), math.sin(0.4), math.cos(0.4)])
    assert 0 <= v[0] < 1 and 0 <= v[1] < 1


def test_anchor_outside_grid_is_skipped(caplog):
    with caplog.at_level(logging.WARNING):
        t = build_targets([Box3D(-10, 0, 0, 2, 2, 1), Box3D(20, 0, 0, 2, 2, 1)], GridSpec())
    assert t.skipped == [0] and len(t.peaks) == 1
    assert "outside the grid" in caplog.text


def test_round_trip():
    ok, detail = roundtrip_oracle(seed=5, cases=200)
    assert ok, detail


def test_round_trip_center_mode():
    grid = GridSpec.reduced()
    b = Box3D(17.3, -4.1, 0.2, 3.9, 1.7, 1.6, -2.0)
    t = build_targets([b], grid, anchor_mode="center")
    (got, score), = decode(t.heatmap, t.regression, grid, 0.5, 1)
    assert score == 1.0
    np.testing.assert_allclose(got.as_array(), b.as_array(), atol=1e-9)


def test_flat_heatmap_below_threshold_decodes_nothing():
    grid = GridSpec.reduced()
    h, w = grid.head_shape
    assert decode(np.full((1, h, w), 0.5), np.zeros((N_REG, h, w)), grid, score_threshold=0.6) == []


def test_two_separated_peaks_decode_two_boxes():
    grid = GridSpec.reduced()
    boxes = [Box3D(10, -10, 0, 3, 2, 1.5, 0.1), Box3D(35, 12, 0, 4, 2, 1.5, 1.0)]
    t = build_targets(boxes, grid)
    got = decode(t.heatmap, t.regression, grid, 0.5, 10)
    assert len(got) == 2
    for b in boxes:
        assert min(np.abs(g.as_array() - b.as_array()).max() for g, _ in got) < 1e-6


def test_max_boxes_keeps_highest_scores():
    grid = GridSpec.reduced()
    h, w = grid.head_shape
    hm = np.zeros((1, h, w))
    for k, (r, c) in enumerate([(5, 5), (20, 20), (30, 8)]):
        hm[0, r, c] = 0.5 + 0.1 * k
    got = decode(hm, np.zeros((N_REG, h, w)), grid, 0.1, 2)
    assert [round(s, 6) for _, s in got] == [0.7, 0.6]


def test_zero_weights_give_half_heatmap():
    head = HeadNet(4, 4, np.random.default_rng(0), heat_bias=0.0)
    for p in head.parameters().values():
        p.data[...] = 0.0
    out = head_forward(Tensor(np.zeros((4, 6, 6))), head)
    assert out.heatmap.shape == (1, 6, 6) and out.regression.shape == (N_REG, 6, 6)
    np.testing.assert_array_equal(out.heatmap.data, 0.5)


def test_head_gradients():
    rng = np.random.default_rng(6)
    head = HeadNet(3, 3, rng)
    f = Tensor(rng.standard_normal((3, 6, 6)))
    w1, w2 = Tensor(rng.standard_normal((1, 6, 6))), Tensor(rng.standard_normal((N_REG, 6, 6)))

    def fn():
        out = head_forward(f, head)
        return (out.heatmap * w1).sum() + (out.regression * w2).sum()

    assert grad_check(fn, [f] + list(head.parameters().values())) < 1e-4
