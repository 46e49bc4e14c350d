"""Acceptance gate: ten numbered criteria, one PASS/FAIL line each.

Run under pytest (lines appear in the terminal summary) or directly:

    python tests/test_acceptance.py
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from rotkld import fitter, gradients, landscape, selftest
from rotkld.gaussian import DistanceKind
from rotkld.loss import LossConfig, Transform, gaussian_loss, loss_from_distance
from rotkld.geometry import RotatedBox

RESULTS = []


def report(num, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {num} ({title}): {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def criterion_1():
    t0 = time.perf_counter()
    worst, bad = 0.0, []
    for kind in DistanceKind:
        rep = gradients.grad_check(kind, trials=1000, tolerance=1e-5, seed=0)
        worst = max(worst, rep.max_rel_error)
        if not rep.passed:
            bad.append(kind.value)
    dt = time.perf_counter() - t0
    ok = not bad and worst <= 1e-5 and dt < 10.0
    return report(1, "gradient oracle", ok,
                  f"7 kinds x 1000 pairs, max rel error {worst:.3g} (tol 1e-5), failing {bad or 'none'}, {dt:.1f}s (< 10s)")


def criterion_2():
    inv_ok, inv_detail = selftest.check_affine_invariance()
    hom_ok, hom_detail = selftest.check_gwd_homogeneity()
    ls = landscape.figure_ls(1.0, 10.0, 10)
    kld = ls.column("kld_forward")
    flat = float(kld.max() - kld.min())
    varying = all(np.all(np.diff(ls.column(c)) > 0) for c in ("gwd", "l2"))
    ok = inv_ok and hom_ok and flat <= 1e-9 and varying
    return report(2, "scale/affine invariance", ok,
                  f"KLD family {inv_detail} (tol 1e-9); GWD {hom_detail} (tol 1e-9); "
                  f"scale sweep KLD spread {flat:.3g}, GWD and l2 increasing: {varying}")


def criterion_3():
    ok, detail = selftest.check_horizontal()
    return report(3, "horizontal degeneration", ok, f"1000 theta=0 pairs, max rel gap {detail} (tol 1e-10)")


def criterion_4():
    ok, detail = selftest.check_expansions()
    return report(4, "expansion equivalence", ok, f"1000 pairs, max rel gap {detail} (tol 1e-10)")


def criterion_5():
    ok, detail = selftest.check_square_and_period()
    return report(5, "square and periodicity", ok, f"{detail} over all kinds (tol 1e-12)")


def criterion_6():
    mc_ok, mc_detail = selftest.check_iou_monte_carlo(seed=0, samples=1_000_000)
    sq_ok, sq_detail = selftest.check_iou_fixture()
    return report(6, "IoU oracle", mc_ok and sq_ok,
                  f"100 pairs, 1e6 samples, seed 0: {mc_detail} (bound |z| <= 3); square fixture {sq_detail} (tol 1e-6)")


def criterion_7():
    ok, detail = selftest.check_angle_modulation()
    return report(7, "angle modulation", ok, f"h = 1..4: {detail} (tol 1e-9)")


def criterion_8():
    t0 = time.perf_counter()
    pairs = fitter.aspect_pairs(50, aspect=10.0, seed=0)
    rows = fitter.fit_suite(pairs, fitter.comparison_configs(max_steps=2000), "aspect10")
    dt = time.perf_counter() - t0
    by = {r.label.split("/")[0]: r.mean_iou for r in rows}
    kld, gwd, sl1 = by["kld_forward"], by["gwd"], by["smooth_l1"]
    ok = kld >= gwd >= sl1 and kld >= 0.9 and dt < 60.0
    return report(8, "fitter ordering", ok,
                  f"mean final IoU kld {kld:.4f} >= gwd {gwd:.4f} >= smooth_l1 {sl1:.4f}, kld >= 0.9; {dt:.1f}s (< 60s)")


def criterion_9():
    p = RotatedBox(1.0, -2.0, 3.0, 7.0, 0.4)
    exact = all(gaussian_loss(p, p, LossConfig(DistanceKind.KLD_FORWARD, tr, tau)) == 1 - 1 / tau
                for tau in (1.0, 2.0, 3.0, 5.0) for tr in (Transform.LOG1P, Transform.SQRT))
    mono_ok, _ = selftest.check_loss_normalization()
    return report(9, "loss normalization", exact and mono_ok,
                  f"L(p, p) == 1 - 1/tau exactly for tau in 1,2,3,5: {exact}; strictly increasing on D in [0, 50]: {mono_ok}")


def criterion_10():
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "rotkld", "selftest"], capture_output=True, text=True)
    dt = time.perf_counter() - t0
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()
    ok = proc.returncode == 0 and dt < 120.0
    return report(10, "selftest", ok, f"exit {proc.returncode}, {dt:.1f}s (< 120s); last line: {last}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("crit", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_acceptance(crit):
    assert crit()


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
