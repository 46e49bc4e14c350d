import math

import pytest

from rotkld import fitter as F
from rotkld.gaussian import DistanceKind
from rotkld.geometry import RotatedBox
from rotkld.loss import LossConfig, Transform

INIT = RotatedBox(0.5, 0.5, 1, 8, 0.3)
TARGET = RotatedBox(0, 0, 1, 10, 0)


@pytest.fixture(scope="module")
def fixture_traces():
    return {c.label.split("/")[0]: F.fit_box(INIT, TARGET, c) for c in F.comparison_configs()}


def test_identity_converges_at_step_zero():
    b = RotatedBox(1, 2, 3, 4, 0.5)
    tr = F.fit_box(b, b, F.default_fit_config())
    assert tr.summary() == "converged step 0 iou 1.0"
    assert len(tr.records) == 1


def test_kld_fixture_reaches_threshold(fixture_traces):
    tr = fixture_traces["kld_forward"]
    assert tr.steps_to(0.9) == 30  # regression value at the shipped rates
    assert tr.final_iou >= 0.9


def test_gwd_fixture_is_slower_and_not_better(fixture_traces):
    assert fixture_traces["gwd"].steps_to(0.9) == 511
    assert fixture_traces["gwd"].final_iou <= fixture_traces["kld_forward"].final_iou


def test_smooth_l1_fixture(fixture_traces):
    assert fixture_traces["smooth_l1"].steps_to(0.9) == 33


def test_kld_tail_is_monotone(fixture_traces):
    losses = [r.loss for r in fixture_traces["kld_forward"].records]
    tail = losses[len(losses) // 10:]
    assert all(b <= a + 1e-12 for a, b in zip(tail, tail[1:]))


def test_trace_invariants(fixture_traces):
    for tr in fixture_traces.values():
        assert len(tr.records) <= 2001
        assert all(0.0 <= r.iou <= 1.0 for r in tr.records)
        assert [r.step for r in tr.records] == list(range(len(tr.records)))


def test_deterministic():
    cfg = F.default_fit_config(max_steps=200)
    assert F.fit_box(INIT, TARGET, cfg).to_csv() == F.fit_box(INIT, TARGET, cfg).to_csv()


def test_stop_iou_ends_early():
    tr = F.fit_box(INIT, TARGET, F.default_fit_config(stop_iou=0.9))
    assert tr.status == F.CONVERGED and tr.steps == 30


def test_divergence_is_reported_not_raised():
    cfg = F.default_fit_config(LossConfig(transform=Transform.NONE), lr_size=50.0, max_steps=50)
    tr = F.fit_box(INIT, TARGET, cfg)
    assert tr.status == F.DIVERGED
    assert "diverged" in tr.summary()


def test_csv_format():
    text = F.fit_box(INIT, TARGET, F.default_fit_config(max_steps=3)).to_csv()
    lines = text.split("\n")
    assert lines[0] == "step,x,y,w,h,theta,loss,iou,grad_norm"
    assert "\r" not in text and text.endswith("\n")
    assert len(lines[1].split(",")) == 9


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            F.FitConfig(lr_center=0.0)
        with pytest.raises(ValueError):
            F.FitConfig(max_steps=0)
        with pytest.raises(ValueError):
            F.FitConfig(stop_iou=1.5)

    @pytest.mark.parametrize("cfg", F.comparison_configs(), ids=lambda c: c.label)
    def test_text_round_trip(self, cfg):
        assert F.FitConfig.from_text(cfg.to_text()) == cfg

    def test_text_defaults_per_loss(self):
        assert F.FitConfig.from_text("kind=gwd").lr_size == F.DEFAULT_RATES["gwd"]["lr_size"]
        assert F.FitConfig.from_text("loss=smooth_l1").loss is None
        assert F.FitConfig.from_text("").loss == LossConfig()

    def test_text_unknown_key(self):
        with pytest.raises(ValueError):
            F.FitConfig.from_text("momentum=0.9")


class TestSuite:
    def test_single_pair_single_cfg(self):
        rows = F.fit_suite([(INIT, TARGET)], [F.default_fit_config(max_steps=50)])
        assert len(rows) == 1 and rows[0].n == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            F.fit_suite([], [F.default_fit_config()])

    def test_workers_do_not_change_results(self):
        pairs = F.aspect_pairs(4, seed=3)
        cfgs = F.comparison_configs(max_steps=100)
        assert F.fit_suite(pairs, cfgs, workers=1) == F.fit_suite(pairs, cfgs, workers=3)

    def test_square_targets_all_losses(self):
        pairs = F.square_pairs(10, seed=0)
        for cfg in F.comparison_configs():
            for init, target in pairs:
                assert F.fit_box(init, target, cfg).final_iou >= 0.95, cfg.label

    def test_square_angle_offset_is_invisible_to_gaussian_losses(self):
        # a square's covariance is isotropic, so a Gaussian loss has no angle signal at all
        init, target = RotatedBox(0.2, 0, 2.2, 2.2, 0.3), RotatedBox(0, 0, 2, 2, 0)
        tr = F.fit_box(init, target, F.default_fit_config())
        assert tr.final.box.theta == pytest.approx(0.3, abs=1e-9)
        assert tr.final_iou < 0.9

    def test_suite_csv(self):
        rows = F.fit_suite([(INIT, TARGET)], F.comparison_configs(max_steps=20))
        text = F.suite_to_csv(rows)
        assert text.splitlines()[0].startswith("loss,pair_class,n,mean_iou")
        assert len(text.splitlines()) == 4


def test_aspect_pairs_shape():
    for init, target in F.aspect_pairs(20, seed=1):
        assert target.h == pytest.approx(10 * target.w)
        assert 0.1 - 1e-12 <= abs(math.remainder(init.theta - target.theta, math.pi)) <= 0.4 + 1e-12
