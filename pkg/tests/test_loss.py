import math

import numpy as np
import pytest

from rotkld import gradients as D
from rotkld.gaussian import DistanceKind
from rotkld.geometry import RotatedBox
from rotkld.loss import (
    LossConfig,
    SqrtAtZero,
    Transform,
    encode_offsets,
    gaussian_loss,
    gaussian_loss_grad,
    gaussian_loss_value_and_grad,
    loss_from_distance,
    parse_key_values,
    smooth_l1,
    smooth_l1_box_grad,
    smooth_l1_box_loss,
    smooth_l1_loss,
)


class TestOffsets:
    def test_identity(self):
        b = RotatedBox(1, 2, 3, 4, 0.5)
        assert encode_offsets(b, b).as_array().tolist() == [0, 0, 0, 0, 0]

    def test_example(self):
        got = encode_offsets(RotatedBox(1, 0, 4, 2, 0), RotatedBox(0, 0, 2, 2, 0)).as_array()
        np.testing.assert_allclose(got, [0.5, 0, math.log(2), 0, 0], atol=1e-15)

    def test_angle_wrap(self):
        a = RotatedBox(0, 0, 2, 1, 0.3)
        b = RotatedBox(0, 0, 2, 1, 0.3 + math.pi)
        assert encode_offsets(b, a).t_theta == pytest.approx(0.0, abs=1e-12)


class TestSmoothL1:
    @pytest.mark.parametrize("d,want", [(0.0, 0.0), (0.5, 0.125), (2.0, 1.5), (-2.0, 1.5), (1.0, 0.5)])
    def test_kernel(self, d, want):
        assert smooth_l1(d) == want

    def test_loss_single_delta(self):
        anchor = RotatedBox(0, 0, 1, 1, 0)
        t = encode_offsets(RotatedBox(0, 0, 1, 1, 0), anchor)
        assert smooth_l1_loss(encode_offsets(RotatedBox(0.5, 0, 1, 1, 0), anchor), t) == 0.125
        assert smooth_l1_loss(encode_offsets(RotatedBox(2, 0, 1, 1, 0), anchor), t) == 1.5
        assert smooth_l1_loss(t, t) == 0.0

    def test_joint_scale_invariance(self):
        p, t, a = RotatedBox(1, 2, 3, 4, 0.2), RotatedBox(0.5, 1, 2, 5, -0.1), RotatedBox(0, 0, 2, 3, 0)
        base = smooth_l1_box_loss(p, t, a)
        for k in (0.1, 10.0, 100.0):
            assert smooth_l1_box_loss(p.scaled(k), t.scaled(k), a.scaled(k)) == pytest.approx(base, abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            p, t = D.random_pair(rng)
            a = RotatedBox(p.x, p.y, p.w * 1.1, p.h * 0.9, p.theta + 0.05)
            an = smooth_l1_box_grad(p, t, a)
            fd = D.finite_diff(lambda b: smooth_l1_box_loss(b, t, a), p)
            assert D.relative_error(an, fd) < 1e-5


class TestNormalizedLoss:
    def test_zero_distance(self):
        b = RotatedBox(1, 2, 3, 4, 0.5)
        for tr in (Transform.SQRT, Transform.LOG1P):
            assert gaussian_loss(b, b, LossConfig(transform=tr)) == 0.0

    def test_examples(self):
        assert loss_from_distance(math.e - 1, LossConfig(transform=Transform.LOG1P, tau=1)) == pytest.approx(0.5)
        assert loss_from_distance(4.0, LossConfig(transform=Transform.SQRT, tau=2)) == pytest.approx(0.75)

    def test_exact_normalization(self):
        b = RotatedBox(-3, 2, 0.7, 9, 1.2)
        for tau in (1.0, 2.0, 3.0, 5.0):
            for kind in DistanceKind:
                assert gaussian_loss(b, b, LossConfig(kind, Transform.LOG1P, tau)) == 1 - 1 / tau

    def test_range_and_monotone(self):
        for tr in (Transform.SQRT, Transform.LOG1P):
            cfg = LossConfig(transform=tr, tau=2.0)
            vals = [loss_from_distance(d, cfg) for d in np.geomspace(1e-8, 1e6, 300)]
            assert all(b > a for a, b in zip(vals, vals[1:]))
            assert all(0.5 <= v < 1 for v in vals)

    def test_raw_mode(self):
        assert loss_from_distance(3.5, LossConfig(transform=Transform.NONE)) == 3.5

    def test_tau_below_one_rejected(self):
        with pytest.raises(ValueError):
            LossConfig(tau=0.5)

    def test_kld_loss_scale_invariant_gwd_not(self):
        p, t = RotatedBox(1, 2, 3, 4, 0.2), RotatedBox(0.5, 1, 2, 5, -0.1)
        for kind in (DistanceKind.KLD_FORWARD, DistanceKind.KLD_REVERSE, DistanceKind.JEFFREYS,
                     DistanceKind.KLD_MIN, DistanceKind.KLD_MAX):
            cfg = LossConfig(kind=kind)
            vals = [gaussian_loss(p.scaled(k), t.scaled(k), cfg) for k in (0.1, 1, 10, 100)]
            assert max(vals) - min(vals) <= 1e-9
        cfg = LossConfig(kind=DistanceKind.GWD)
        vals = [gaussian_loss(p.scaled(k), t.scaled(k), cfg) for k in (0.1, 1, 10, 100)]
        assert all(b > a for a, b in zip(vals, vals[1:]))


class TestLossGradient:
    def test_zero_at_identity(self):
        b = RotatedBox(1, 2, 3, 4, 0.5)
        assert np.all(gaussian_loss_grad(b, b, LossConfig()).as_array() == 0.0)

    def test_sqrt_at_zero(self):
        b = RotatedBox(1, 2, 3, 4, 0.5)
        with pytest.raises(SqrtAtZero):
            gaussian_loss_grad(b, b, LossConfig(transform=Transform.SQRT))

    @pytest.mark.parametrize("cfg", [
        LossConfig(),
        LossConfig(DistanceKind.KLD_FORWARD, Transform.SQRT, 2.0),
        LossConfig(DistanceKind.GWD, Transform.LOG1P, 1.0),
        LossConfig(DistanceKind.JS, Transform.SQRT, 3.0),
        LossConfig(DistanceKind.JEFFREYS, Transform.NONE, 1.0),
    ], ids=lambda c: f"{c.kind.value}-{c.transform.value}")
    def test_matches_finite_differences(self, cfg):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            p, t = D.random_pair(rng)
            an = gaussian_loss_grad(p, t, cfg)
            fd = D.finite_diff(lambda b: gaussian_loss(b, t, cfg), p)
            assert D.relative_error(an, fd) <= 1e-5

    def test_sign_follows_distance(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            p, t = D.random_pair(rng)
            dg = D.distance_grad(DistanceKind.KLD_FORWARD, p, t).d_theta
            lg = gaussian_loss_grad(p, t, LossConfig()).d_theta
            assert math.copysign(1, dg) == math.copysign(1, lg) or dg == lg == 0

    def test_value_and_grad_consistent(self):
        p, t = RotatedBox(1, 2, 3, 4, 0.2), RotatedBox(0.5, 1, 2, 5, -0.1)
        val, _ = gaussian_loss_value_and_grad(p, t, LossConfig())
        assert val == gaussian_loss(p, t, LossConfig())


class TestConfigText:
    def test_round_trip(self):
        cfg = LossConfig(DistanceKind.JS, Transform.SQRT, 3.0)
        assert LossConfig.from_text(cfg.to_text()) == cfg

    def test_defaults_and_comments(self):
        cfg = LossConfig.from_text("# defaults\n\nkind = gwd  # wasserstein\n")
        assert cfg == LossConfig(kind=DistanceKind.GWD)

    def test_errors_name_line(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_key_values("kind=gwd\nnonsense\n")
        with pytest.raises(ValueError):
            LossConfig.from_text("colour=blue")
        with pytest.raises(ValueError):
            LossConfig.from_text("kind=hellinger")
