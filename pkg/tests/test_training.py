import math

import numpy as np
import pytest

from pcground.autodiff import Tensor
from pcground.checks import grad_loss, small_targets
from pcground.head import N_REG, HeadOutput
from pcground.model import GroundingNet, ModelConfig, default_vocabulary, prepare_batch
from pcground.scenes import make_scenes
from pcground.training import (DivergenceError, LossConfig, Optimizer, focal_heatmap_loss,
                               loss_terms, smooth_l1, total_loss, train_overfit)


def test_focal_half_prediction_hard_target():
    target = np.zeros((1, 2, 2))
    target[0, 0, 0] = 1.0
    # four pixels each contribute 0.25 * log 2 and there is one peak
    loss = focal_heatmap_loss(Tensor(np.full((1, 2, 2), 0.5)), target)
    assert math.isclose(float(loss.data), math.log(2), rel_tol=1e-14)


def test_focal_half_prediction_soft_neighbours():
    target = np.full((1, 2, 2), 0.5)
    target[0, 0, 0] = 1.0
    loss = focal_heatmap_loss(Tensor(np.full((1, 2, 2), 0.5)), target)
    expect = 0.25 * math.log(2) * (1 + 3 / 16)  # (1 - 0.5)^4 reduces each negative term
    assert math.isclose(float(loss.data), expect, rel_tol=1e-14)


def test_focal_perfect_prediction():
    target = np.zeros((1, 4, 4))
    target[0, 1, 2] = 1.0
    pred = np.clip(target, 1e-7, 1 - 1e-7)
    assert float(focal_heatmap_loss(Tensor(pred), target).data) < 1e-5


def test_focal_monotone_in_peak_prediction():
    target = np.zeros((1, 3, 3))
    target[0, 1, 1] = 1.0
    pred = np.full((1, 3, 3), 0.2)
    losses = []
    for p in np.linspace(0.05, 0.999, 30):
        pred[0, 1, 1] = p
        losses.append(float(focal_heatmap_loss(Tensor(pred), target).data))
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_focal_rejects_saturated_predictions():
    with pytest.raises(ValueError):
        focal_heatmap_loss(Tensor(np.ones((1, 2, 2))), np.zeros((1, 2, 2)))
    with pytest.raises(ValueError):
        focal_heatmap_loss(Tensor(np.full((1, 2, 2), 0.5)), np.zeros((1, 3, 3)))


@pytest.mark.parametrize("r, expect", [(0.0, 0.0), (0.5, 0.125), (2.0, 1.5), (-2.0, 1.5), (1.0, 0.5)])
def test_smooth_l1_values(r, expect):
    assert float(smooth_l1(Tensor(np.array([r])), np.zeros(1)).data) == expect


def test_smooth_l1_is_a_mean():
    v = smooth_l1(Tensor(np.array([0.0, 0.5, 2.0])), np.zeros(3))
    assert math.isclose(float(v.data), (0 + 0.125 + 1.5) / 3)


def test_smooth_l1_kink_takes_quadratic_branch():
    x = Tensor(np.array([1.0]), requires_grad=True)
    smooth_l1(x, np.zeros(1)).backward()
    assert x.grad[0] == 1.0


def _head(rng, peaks_reg=None):
    hm = Tensor(rng.uniform(0.05, 0.95, (1, 8, 8)))
    reg = Tensor(rng.standard_normal((N_REG, 8, 8)))
    return HeadOutput(hm, reg)


def test_zero_beta_is_heatmap_loss():
    rng = np.random.default_rng(0)
    t = small_targets(rng)
    out = _head(rng)
    hm, _ = loss_terms(out, [t], LossConfig())
    assert float(total_loss(out, [t], LossConfig(beta=0.0)).data) == float(hm.data)


def test_default_weight_and_composition():
    rng = np.random.default_rng(1)
    t = small_targets(rng)
    out = _head(rng)
    assert LossConfig().beta == 0.25
    hm, reg = loss_terms(out, [t], LossConfig())
    assert math.isclose(float(total_loss(out, [t]).data), float(hm.data) + 0.25 * float(reg.data), rel_tol=1e-14)
    # regression is the sum over channels of per-channel means at the peaks
    pred = out.regression.data[:, [2, 5], [3, 5]].T
    want = t.peak_values
    r = pred - want
    elem = np.where(np.abs(r) <= 1, 0.5 * r * r, np.abs(r) - 0.5)
    assert math.isclose(float(reg.data), elem.mean(axis=0).sum(), rel_tol=1e-12)


def test_loss_is_non_negative():
    rng = np.random.default_rng(2)
    for _ in range(20):
        t = small_targets(rng)
        assert float(total_loss(_head(rng), [t]).data) >= 0.0


def test_batch_focal_normalises_by_all_peaks():
    rng = np.random.default_rng(3)
    t1, t2 = small_targets(rng), small_targets(rng, peaks=((1, 1),))
    hm = rng.uniform(0.05, 0.95, (2, 1, 8, 8))
    out = HeadOutput(Tensor(hm), Tensor(np.zeros((2, N_REG, 8, 8))))
    joint, _ = loss_terms(out, [t1, t2], LossConfig())
    a = float(focal_heatmap_loss(Tensor(hm[0]), t1.heatmap).data) * 2
    b = float(focal_heatmap_loss(Tensor(hm[1]), t2.heatmap).data) * 1
    assert math.isclose(float(joint.data), (a + b) / 3, rel_tol=1e-12)


def test_total_loss_gradient():
    assert grad_loss(4) < 1e-4


def test_invalid_config():
    with pytest.raises(ValueError):
        LossConfig(beta=-1)
    with pytest.raises(ValueError):
        LossConfig(optimizer="sgd-momentum")


def test_cosine_schedule():
    opt = Optimizer({}, LossConfig(lr=0.1), total_steps=10)
    assert opt.lr() == 0.1
    opt.t = 5
    assert math.isclose(opt.lr(), 0.05)
    opt.t = 10
    assert abs(opt.lr()) < 1e-17


def test_defaults_are_plain_descent():
    cfg = LossConfig()
    assert (cfg.optimizer, cfg.lr, cfg.weight_decay) == ("gd", 1e-2, 0.0)


def test_adam_first_step_and_decoupled_decay():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.array([0.5, -3.0])
    Optimizer({"p": p}, LossConfig(lr=0.1, optimizer="adam", weight_decay=0.5), 10).step()
    # bias-corrected first step moves each coordinate by lr * sign(g), after shrinking by lr * decay
    np.testing.assert_allclose(p.data, [0.95 - 0.1, -1.9 + 0.1], atol=1e-7)


def test_gradient_descent_step():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.array([0.5, 0.5])
    Optimizer({"p": p}, LossConfig(lr=0.1, optimizer="gd"), 10).step()
    np.testing.assert_allclose(p.data, [0.95, -2.05])


@pytest.fixture(scope="module")
def tiny():
    cfg = ModelConfig.reduced()
    vocab = default_vocabulary()
    scenes = make_scenes(2, seed=3)
    return cfg, vocab, scenes, prepare_batch(scenes, cfg, vocab)


def test_zero_steps_leave_parameters_unchanged(tiny):
    cfg, vocab, _, batch = tiny
    model = GroundingNet(cfg, vocab)
    before = {k: v.data.copy() for k, v in model.parameters().items()}
    result = train_overfit(model, batch, LossConfig(), steps=0)
    assert result.losses == []
    for k, v in model.parameters().items():
        np.testing.assert_array_equal(v.data, before[k])


def test_short_run_has_finite_decreasing_loss(tiny):
    cfg, vocab, scenes, batch = tiny
    model = GroundingNet(cfg, vocab)
    result = train_overfit(model, batch, LossConfig(), steps=8, eval_every=4,
                           referred=[s.referred_boxes() for s in scenes])
    totals = [l[3] for l in result.losses]
    assert len(totals) == 8 and all(math.isfinite(v) for v in totals)
    assert totals[-1] < totals[0]
    assert [s for s, _ in result.accuracy] == [4, 8]
    assert result.csv().splitlines()[0] == "step,L_hm,L_reg,L_total"


def test_divergence_aborts(tiny):
    cfg, vocab, _, batch = tiny
    model = GroundingNet(cfg, vocab)
    with pytest.raises(DivergenceError):
        train_overfit(model, batch, LossConfig(divergence_limit=1e-3), steps=3)
