"""Seeded invariant checks run by ``rotkld selftest``.

Each check returns (passed, detail). Checks never raise; an exception inside a
check is reported as a failure of that check.
"""

from __future__ import annotations

import contextlib
import math
import time
from unittest import mock

import numpy as np

from . import gaussian as G
from . import gradients as D
from .gaussian import DistanceKind
from .geometry import RotatedBox, monte_carlo_iou, rotated_iou
from .loss import LossConfig, Transform, gaussian_loss, loss_from_distance


def _random_box(rng, lo=0.5, hi=20.0) -> RotatedBox:
    return RotatedBox(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(lo, hi),
                      rng.uniform(lo, hi), rng.uniform(-math.pi / 2, math.pi / 2))


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def check_gaussian_structure():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(1000):
        b = _random_box(rng)
        s = G.box_to_gaussian(b).sigma
        worst = max(worst, abs(s[0, 1] - s[1, 0]) / abs(s).max())
        ev = np.sort(np.linalg.eigvalsh(0.5 * (s + s.T)))
        want = np.sort([b.w**2 / 4, b.h**2 / 4])
        worst = max(worst, float(np.max(np.abs(ev - want) / want)))
    return worst <= 1e-9, f"max rel deviation {worst:.3g}"


def check_round_trip():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(1000):
        g = G.box_to_gaussian(_random_box(rng))
        g2 = G.box_to_gaussian(G.gaussian_to_box(g))
        worst = max(worst, float(np.max(np.abs(g2.sigma - g.sigma)) / np.abs(g.sigma).max()))
    return worst <= 1e-9, f"max rel deviation {worst:.3g}"


def affine_family(rng):
    mats = [k * np.eye(2) for k in (0.1, 3.0, 100.0)]
    mats += [G.rotation(rng.uniform(-math.pi, math.pi)) for _ in range(5)]
    for _ in range(5):
        m = np.array([[1.0, rng.uniform(-2, 2)], [rng.uniform(-2, 2), 1.0]]) * rng.uniform(0.2, 5)
        if abs(np.linalg.det(m)) < 1e-3:
            m[0, 0] += 1.0
        mats.append(m)
    return mats


def check_affine_invariance():
    rng = np.random.default_rng(103)
    mats = affine_family(rng)
    worst = 0.0
    for _ in range(100):
        gp, gt = G.box_to_gaussian(_random_box(rng)), G.box_to_gaussian(_random_box(rng))
        for kind in G.SCALE_INVARIANT_KINDS:
            base = G.distance(kind, gp, gt)
            for m in mats:
                worst = max(worst, _rel(G.distance(kind, gp.transformed(m), gt.transformed(m)), base))
    return worst <= 1e-9, f"max rel change {worst:.3g} over {len(mats)} transforms"


def check_gwd_homogeneity():
    rng = np.random.default_rng(104)
    worst = 0.0
    for _ in range(100):
        p, t = _random_box(rng), _random_box(rng)
        base = G.box_distance(DistanceKind.GWD, p, t)
        for k in (0.1, 3.0, 100.0):
            worst = max(worst, _rel(G.box_distance(DistanceKind.GWD, p.scaled(k), t.scaled(k)), k * base))
    return worst <= 1e-9, f"max rel deviation from k*gwd {worst:.3g}"


def check_horizontal():
    rng = np.random.default_rng(105)
    wk = wg = 0.0
    for _ in range(1000):
        p = RotatedBox(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.5, 20), rng.uniform(0.5, 20), 0.0)
        t = RotatedBox(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.5, 20), rng.uniform(0.5, 20), 0.0)
        wk = max(wk, _rel(G.box_distance(DistanceKind.KLD_FORWARD, p, t), G.kld_horizontal(p, t)))
        wg = max(wg, _rel(G.box_distance(DistanceKind.GWD, p, t), G.gwd_horizontal(p, t)))
    return max(wk, wg) <= 1e-10, f"kld {wk:.3g}, gwd {wg:.3g}"


def check_expansions():
    rng = np.random.default_rng(106)
    wf = wr = 0.0
    for _ in range(1000):
        p, t = D.random_pair(rng)
        wf = max(wf, _rel(G.box_distance(DistanceKind.KLD_FORWARD, p, t), G.kld_forward_expanded(p, t)))
        wr = max(wr, _rel(G.box_distance(DistanceKind.KLD_REVERSE, p, t), G.kld_reverse_expanded(p, t)))
    return max(wf, wr) <= 1e-10, f"forward {wf:.3g}, reverse {wr:.3g}"


def check_square_and_period():
    rng = np.random.default_rng(107)
    worst = 0.0
    for _ in range(200):
        x, y, s = rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.5, 20)
        a = RotatedBox(x, y, s, s, rng.uniform(-3, 3))
        b = RotatedBox(x, y, s, s, rng.uniform(-3, 3))
        box = _random_box(rng)
        for kind in DistanceKind:
            worst = max(worst, G.box_distance(kind, a, b), G.box_distance(kind, box, box.swapped()))
    return worst < 1e-12, f"max distance {worst:.3g}"


def check_gradients():
    worst, failures = 0.0, []
    for kind in DistanceKind:
        rep = D.grad_check(kind, trials=1000, tolerance=1e-5, seed=108)
        worst = max(worst, rep.max_rel_error)
        if not rep.passed:
            failures.append(kind.value)
    detail = f"max rel error {worst:.3g}"
    if failures:
        detail += f"; failing kinds: {', '.join(failures)}"
    return not failures, detail


def check_angle_modulation():
    grads = []
    worst = 0.0
    t_boxes = [RotatedBox(0, 0, 1, h, 0) for h in (1, 2, 3, 4)]
    for t in t_boxes:
        p = RotatedBox(0, 0, 1, t.h, 0.1)
        g = D.distance_grad(DistanceKind.KLD_FORWARD, p, t).d_theta
        grads.append(abs(g))
        worst = max(worst, abs(g - D.closed_form_theta_grad(1.0, t.h, 0.1)))
    increasing = all(b > a for a, b in zip(grads, grads[1:]))
    return increasing and worst <= 1e-9, f"|d_theta| = {', '.join(f'{g:.6g}' for g in grads)}; closed-form gap {worst:.3g}"


def iou_mc_pairs(rng, n=100):
    """Overlapping-ish random pairs for the Monte-Carlo IoU cross-check."""
    pairs = []
    for _ in range(n):
        a = _random_box(rng, 0.5, 5.0)
        b = RotatedBox(a.x + rng.uniform(-2, 2), a.y + rng.uniform(-2, 2), rng.uniform(0.5, 5.0),
                       rng.uniform(0.5, 5.0), rng.uniform(-math.pi / 2, math.pi / 2))
        pairs.append((a, b))
    return pairs


def check_iou_monte_carlo(seed=0, samples=1_000_000):
    rng = np.random.default_rng(seed)
    zs = []
    for a, b in iou_mc_pairs(rng):
        est, se = monte_carlo_iou(a, b, samples, rng)
        # se is 0 only when every sample agreed (IoU estimate exactly 0 or 1)
        zs.append(abs(est - rotated_iou(a, b)) / max(se, 1.0 / samples))
    zs = np.array(zs)
    # per-pair bound, plus a bias screen: mean z^2 of 100 unit normals is 1 +- 0.14
    mean_sq = float(np.mean(zs**2))
    return zs.max() <= 3.0 and mean_sq <= 1.6, f"max |z| {zs.max():.3g}, mean z^2 {mean_sq:.3g}"


def check_iou_fixture():
    # unit square against itself turned by pi/4: the overlap is an octagon of area 2(sqrt2 - 1)
    inter = 2 * (math.sqrt(2) - 1)
    closed = inter / (2 - inter)
    got = rotated_iou(RotatedBox(0, 0, 1, 1, 0), RotatedBox(0, 0, 1, 1, math.pi / 4))
    return abs(got - closed) <= 1e-6, f"iou {got:.12g} vs {closed:.12g}"


def check_loss_normalization():
    ok = True
    boxes = [_random_box(np.random.default_rng(110)) for _ in range(20)]
    for tau in (1.0, 2.0, 3.0, 5.0):
        for tr in (Transform.SQRT, Transform.LOG1P):
            cfg = LossConfig(DistanceKind.KLD_FORWARD, tr, tau)
            ok &= loss_from_distance(0.0, cfg) == 1 - 1 / tau
            ok &= all(gaussian_loss(b, b, cfg) == 1 - 1 / tau for b in boxes)
            seq = [loss_from_distance(d, cfg) for d in np.linspace(0, 50, 501)]
            ok &= all(b > a for a, b in zip(seq, seq[1:]))
            ok &= all(1 - 1 / tau <= v < 1 for v in seq)
    return ok, "L(p, p) = 1 - 1/tau, strictly increasing in D, in [1 - 1/tau, 1)"


CHECKS = [
    ("gaussian-structure", check_gaussian_structure),
    ("gaussian-round-trip", check_round_trip),
    ("kld-affine-invariance", check_affine_invariance),
    ("gwd-scale-homogeneity", check_gwd_homogeneity),
    ("horizontal-degeneration", check_horizontal),
    ("expansion-equivalence", check_expansions),
    ("square-and-periodicity", check_square_and_period),
    ("gradient-check", check_gradients),
    ("angle-modulation", check_angle_modulation),
    ("iou-monte-carlo", check_iou_monte_carlo),
    ("iou-rotated-square", check_iou_fixture),
    ("loss-normalization", check_loss_normalization),
]


def _asymmetric_box_to_gaussian(box):
    g = _ORIGINAL_BOX_TO_GAUSSIAN(box)
    s = np.array(g.sigma)
    s[1, 0] += 1e-3 * (abs(s[0, 0]) + abs(s[1, 1]))
    return G.Gaussian2D._trusted(g.mu, s)


_ORIGINAL_BOX_TO_GAUSSIAN = G.box_to_gaussian
FAULTS = {"sigma-asymmetry": _asymmetric_box_to_gaussian}


@contextlib.contextmanager
def inject_fault(name):
    """Swap in a deliberately broken component for harness testing."""
    if name is None:
        yield
        return
    if name not in FAULTS:
        raise ValueError(f"unknown fault {name!r}")
    with mock.patch.object(G, "box_to_gaussian", FAULTS[name]), \
            mock.patch.object(D, "box_to_gaussian", FAULTS[name]):
        yield


def run(out=print, fault=None, timing=False) -> int:
    """Run every check; print one line each; return the exit code."""
    first_fail = None
    with inject_fault(fault):
        for name, fn in CHECKS:
            t0 = time.perf_counter()
            try:
                ok, detail = fn()
            except Exception as exc:  # a crashing check is a failing check
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
            if timing:
                line += f" ({time.perf_counter() - t0:.2f}s)"
            out(line)
            if not ok and first_fail is None:
                first_fail = name
    if first_fail is not None:
        out(f"selftest FAILED: first failing property {first_fail}")
        return 1
    out("selftest passed")
    return 0
