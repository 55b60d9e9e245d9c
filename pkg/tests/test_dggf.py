import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pcground.autodiff import Tensor, tsum
from pcground.dggf import (DGGFBlock, DynGraphConv, TextGate, dggf_forward, estimate_stats,
                           max_relative, text_gate)
from pcground.gradcheck import grad_check
from pcground.kernels import roll_schedule
from pcground.oracles import brute_max_relative, brute_quadrant_stats


def test_single_bright_quadrant_statistics():
    c = 4
    x = np.zeros((c, 6, 6))
    x[:, :3, :3] = 1.0
    stats = estimate_stats(x)
    # half the pairs are sqrt(C) apart, the other half coincide
    assert math.isclose(float(stats.mu), math.sqrt(c) / 2, abs_tol=1e-15)
    assert math.isclose(float(stats.sigma), math.sqrt(c) / 2, abs_tol=1e-15)
    assert float(stats.threshold) == 0.0


def test_constant_map_has_no_edges():
    x = np.full((3, 8, 8), 2.5)
    stats = estimate_stats(x)
    assert float(stats.mu) == 0.0 and float(stats.sigma) == 0.0
    out, masks = max_relative(Tensor(x), stats.threshold, 2)
    assert not masks.any()
    assert not out.data.any()


def test_pair_count_is_half_the_cells():
    for h, w in ((8, 8), (6, 10), (80, 80)):
        assert estimate_stats(np.zeros((1, h, w))).n_pairs == h * w // 2


def test_odd_extent_is_edge_padded():
    x = np.random.default_rng(0).standard_normal((2, 7, 5))
    stats = estimate_stats(x)
    mu, sigma, n = brute_quadrant_stats(x)
    assert stats.n_pairs == n == 8 * 6 // 2
    assert abs(float(stats.mu) - mu) < 1e-12 and abs(float(stats.sigma) - sigma) < 1e-12


def test_roll_schedule_for_stage3():
    rolls = roll_schedule(80, 80, 8)
    assert len(rolls) == 18
    assert [s for a, s in rolls if a == 0] == [8 * m for m in range(1, 10)]
    assert [s for a, s in rolls if a == 1] == [8 * m for m in range(1, 10)]


def test_masks_and_values_match_loop_oracle():
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.standard_normal((2, 8, 8))
        tau = float(estimate_stats(x).threshold)
        out, masks = max_relative(Tensor(x), tau, 2)
        ref_masks, ref_out = brute_max_relative(x, tau, 2)
        np.testing.assert_array_equal(masks, ref_masks)
        np.testing.assert_allclose(out.data, ref_out, atol=1e-12)


def test_step_must_fit_the_map():
    with pytest.raises(ValueError):
        max_relative(Tensor(np.zeros((1, 4, 4))), 1.0, 4)
    with pytest.raises(ValueError):
        max_relative(Tensor(np.zeros((1, 4, 4))), 1.0, 0)


def test_static_mode_connects_everything():
    x = np.random.default_rng(2).standard_normal((2, 8, 8))
    conv = DynGraphConv(2, 2, 2, np.random.default_rng(0), mode="static")
    _, masks, _ = conv.aggregate(Tensor(x))
    assert masks.all()
    with pytest.raises(ValueError):
        DynGraphConv(2, 2, 2, np.random.default_rng(0), mode="knn")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_dynamic_mask_is_distance_below_threshold(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, 8, 8))
    tau = float(estimate_stats(x).threshold)
    _, masks = max_relative(Tensor(x), tau, 2)
    for r, (axis, shift) in enumerate(roll_schedule(8, 8, 2)):
        shifted = np.roll(x, shift, axis=1 + axis)
        d = np.sqrt(((shifted - x) ** 2).sum(axis=0))
        np.testing.assert_array_equal(masks[r].astype(bool), d < tau)


def test_batched_thresholds_are_per_sample():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 2, 8, 8))
    x[1] *= 10.0
    stats = estimate_stats(x)
    assert stats.mu.shape == (2,)
    out, masks = max_relative(Tensor(x), stats.threshold, 2)
    for i in range(2):
        single, m = max_relative(Tensor(x[i]), stats.threshold[i], 2)
        np.testing.assert_array_equal(masks[i], m)
        np.testing.assert_allclose(out.data[i], single.data)


def _zero_proj(gate: TextGate):
    gate.proj.weight.data[...] = 0.0
    gate.proj.bias.data[...] = 0.0


def test_zero_text_halves_the_map():
    rng = np.random.default_rng(4)
    gate = TextGate(5, 3, rng)
    _zero_proj(gate)
    lr = rng.standard_normal((3, 4, 4))
    out = text_gate(Tensor(rng.standard_normal((5, 7))), Tensor(lr), gate)
    # position conv starts at zero, so only the 0.5 gate remains
    np.testing.assert_allclose(out.data, 0.5 * lr, atol=1e-15)


def test_gate_pooling_options():
    rng = np.random.default_rng(5)
    f_t = Tensor(rng.standard_normal((4, 6)))
    np.testing.assert_allclose(TextGate(4, 2, rng, "max").pooled(f_t).data, f_t.data.max(axis=-1))
    np.testing.assert_allclose(TextGate(4, 2, rng, "avg").pooled(f_t).data, f_t.data.mean(axis=-1))
    with pytest.raises(ValueError):
        TextGate(4, 2, rng, "attn")


def test_gate_width_mismatch():
    rng = np.random.default_rng(6)
    with pytest.raises(ValueError):
        text_gate(Tensor(np.zeros((4, 3))), Tensor(np.zeros((5, 4, 4))), TextGate(4, 3, rng))


def test_zero_output_projection_is_identity():
    rng = np.random.default_rng(7)
    block = DGGFBlock(4, 3, 2, rng)
    block.w_out.weight.data[...] = 0.0
    block.w_out.bias.data[...] = 0.0
    lr = rng.standard_normal((3, 8, 8))
    out = dggf_forward(Tensor(rng.standard_normal((4, 5))), Tensor(lr), block)
    np.testing.assert_array_equal(out.data, lr)


def test_block_gradients():
    rng = np.random.default_rng(8)
    block = DGGFBlock(2, 2, 2, rng)
    for p in block.parameters().values():
        p.data[...] = rng.uniform(-0.5, 0.5, p.shape)
    f_t, lr = Tensor(rng.standard_normal((2, 5))), Tensor(rng.standard_normal((2, 8, 8)))
    w = Tensor(rng.standard_normal((2, 8, 8)))
    assert grad_check(lambda: tsum(dggf_forward(f_t, lr, block) * w),
                      [f_t, lr] + list(block.parameters().values())) < 1e-4


def test_max_relative_gradient():
    rng = np.random.default_rng(9)
    x = Tensor(rng.standard_normal((2, 6, 6)))
    w = Tensor(rng.standard_normal((2, 6, 6)))
    tau = float(estimate_stats(x.data).threshold) + 1.0
    assert grad_check(lambda: tsum(max_relative(x, tau, 2)[0] * w), [x]) < 1e-4
