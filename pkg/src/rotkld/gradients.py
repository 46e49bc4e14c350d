"""Analytic gradients of the Gaussian distances w.r.t. the predicted box.

Gradients are taken in (x, y, ln w, ln h, theta). Each distance supplies its
partials w.r.t. the predicted mean and covariance; those are pushed through the
box -> Gaussian map by :func:`_chain_box`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gaussian import (
    DistanceKind,
    Gaussian2D,
    _inv2,
    box_distance,
    box_to_gaussian,
    gwd_squared,
    kl_parts,
)
from .geometry import RotatedBox

FD_STEP = 1e-5


@dataclass(frozen=True)
class ParamGradient:
    d_x: float
    d_y: float
    d_lnw: float
    d_lnh: float
    d_theta: float

    @classmethod
    def from_array(cls, arr) -> "ParamGradient":
        return cls(*(float(v) for v in arr))

    def as_array(self) -> np.ndarray:
        return np.array([self.d_x, self.d_y, self.d_lnw, self.d_lnh, self.d_theta])

    def scaled(self, k: float) -> "ParamGradient":
        return ParamGradient.from_array(k * self.as_array())

    def d_w(self, w: float) -> float:
        """Gradient w.r.t. the raw width, given the width it was evaluated at."""
        return self.d_lnw / w

    def d_h(self, h: float) -> float:
        return self.d_lnh / h

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


def _sigma_partials(box: RotatedBox):
    """dSigma/d(ln w), dSigma/d(ln h), dSigma/d(theta)."""
    c, s = math.cos(box.theta), math.sin(box.theta)
    a, b = box.w * box.w / 4, box.h * box.h / 4
    u = np.array([c, s])
    v = np.array([-s, c])
    uv = np.outer(u, v)
    return 2 * a * np.outer(u, u), 2 * b * np.outer(v, v), (a - b) * (uv + uv.T)


def _chain_box(box: RotatedBox, g_mu: np.ndarray, g_sigma: np.ndarray) -> ParamGradient:
    # <G, dSigma> for the three partials of _sigma_partials, written out for a
    # symmetric G: u^T G u, v^T G v and 2 u^T G v with u, v the box axes
    c, s = math.cos(box.theta), math.sin(box.theta)
    a, b = box.w * box.w / 4, box.h * box.h / 4
    gxx, gxy, gyy = float(g_sigma[0, 0]), 0.5 * float(g_sigma[0, 1] + g_sigma[1, 0]), float(g_sigma[1, 1])
    ugu = gxx * c * c + 2 * gxy * c * s + gyy * s * s
    vgv = gxx * s * s - 2 * gxy * c * s + gyy * c * c
    ugv = (gyy - gxx) * c * s + gxy * (c * c - s * s)
    return ParamGradient(float(g_mu[0]), float(g_mu[1]), 2 * a * ugu, 2 * b * vgv, 2 * (a - b) * ugv)


def _forward_partials(gp: Gaussian2D, gt: Gaussian2D):
    val, g_mu, g_s, _, _ = kl_parts(gp.mu, gp.sigma, gt.mu, gt.sigma)
    return val, g_mu, g_s


def _reverse_partials(gp: Gaussian2D, gt: Gaussian2D):
    val, _, _, g_mu, g_s = kl_parts(gt.mu, gt.sigma, gp.mu, gp.sigma)
    return val, g_mu, g_s


def _gwd_sq_partials(gp: Gaussian2D, gt: Gaussian2D):
    d = gp.mu - gt.mu
    sp, st = gp.sigma, gt.sigma
    inv_p, det_p = _inv2(sp)
    det_t = st[0, 0] * st[1, 1] - st[0, 1] ** 2
    root = math.sqrt(det_p * det_t)
    cross = math.sqrt(np.trace(sp @ st) + 2 * root)
    g_s = np.eye(2) - (st + root * inv_p) / cross
    return gwd_squared(gp, gt), 2 * d, g_s


def _js_partials(gp: Gaussian2D, gt: Gaussian2D):
    d = gp.mu - gt.mu
    mu_m = 0.5 * (gp.mu + gt.mu)
    s_m = 0.5 * (gp.sigma + gt.sigma) + 0.25 * np.outer(d, d)
    v1, _, _, gmb1, gsb1 = kl_parts(gt.mu, gt.sigma, mu_m, s_m)
    v2, gma2, gsa2, gmb2, gsb2 = kl_parts(gp.mu, gp.sigma, mu_m, s_m)
    g_mu_m = gmb1 + gmb2
    g_s_m = gsb1 + gsb2
    g_mu = 0.5 * (gma2 + 0.5 * g_mu_m + 0.5 * g_s_m @ d)
    g_s = 0.5 * (gsa2 + 0.5 * g_s_m)
    return 0.5 * (v1 + v2), g_mu, g_s


def distance_partials(kind: DistanceKind, gp: Gaussian2D, gt: Gaussian2D):
    """Value of the distance and its partials w.r.t. (mu_p, Sigma_p)."""
    if kind is DistanceKind.KLD_FORWARD:
        return _forward_partials(gp, gt)
    if kind is DistanceKind.KLD_REVERSE:
        return _reverse_partials(gp, gt)
    if kind is DistanceKind.JS:
        return _js_partials(gp, gt)
    if kind in (DistanceKind.KLD_MIN, DistanceKind.KLD_MAX, DistanceKind.JEFFREYS):
        fv, fm, fs = _forward_partials(gp, gt)
        rv, rm, rs = _reverse_partials(gp, gt)
        if kind is DistanceKind.JEFFREYS:
            return fv + rv, fm + rm, fs + rs
        take_fwd = (fv <= rv) if kind is DistanceKind.KLD_MIN else (fv >= rv)
        return (fv, fm, fs) if take_fwd else (rv, rm, rs)
    if kind is DistanceKind.GWD:
        sq, gm, gs = _gwd_sq_partials(gp, gt)
        dist = math.sqrt(max(sq, 0.0))
        if dist == 0.0:
            return 0.0, np.zeros(2), np.zeros((2, 2))
        return dist, gm / (2 * dist), gs / (2 * dist)
    raise ValueError(f"unsupported distance kind {kind}")


def distance_grad(kind: DistanceKind, p: RotatedBox, t: RotatedBox) -> ParamGradient:
    """Exact gradient of the distance w.r.t. (x_p, y_p, ln w_p, ln h_p, theta_p)."""
    _, g_mu, g_s = distance_partials(kind, box_to_gaussian(p), box_to_gaussian(t))
    return _chain_box(p, g_mu, g_s)


def distance_value_and_grad(kind: DistanceKind, p: RotatedBox, t: RotatedBox):
    val, g_mu, g_s = distance_partials(kind, box_to_gaussian(p), box_to_gaussian(t))
    return float(val), _chain_box(p, g_mu, g_s)


def gwd_squared_grad(p: RotatedBox, t: RotatedBox) -> ParamGradient:
    """Gradient of the squared GWD; its center part is (2 dx, 2 dy)."""
    _, g_mu, g_s = _gwd_sq_partials(box_to_gaussian(p), box_to_gaussian(t))
    return _chain_box(p, g_mu, g_s)


def perturb(box: RotatedBox, index: int, delta: float) -> RotatedBox:
    """Move one parameter of `box`; sizes move multiplicatively (a step in ln w / ln h)."""
    x, y, w, h, th = box.as_tuple()
    if index == 0:
        x += delta
    elif index == 1:
        y += delta
    elif index == 2:
        w *= math.exp(delta)
    elif index == 3:
        h *= math.exp(delta)
    elif index == 4:
        # distances are pi-periodic in theta, so wrapping inside RotatedBox is harmless
        th += delta
    else:
        raise IndexError(index)
    return RotatedBox(x, y, w, h, th)


def finite_diff(fn, p: RotatedBox, step: float = FD_STEP) -> ParamGradient:
    """Central differences of a scalar function of the predicted box."""
    if step <= 0:
        raise ValueError("step must be positive")
    out = np.empty(5)
    for i in range(5):
        out[i] = (fn(perturb(p, i, step)) - fn(perturb(p, i, -step))) / (2 * step)
    return ParamGradient.from_array(out)


def finite_diff_grad(kind: DistanceKind, p: RotatedBox, t: RotatedBox, step: float = FD_STEP) -> ParamGradient:
    return finite_diff(lambda b: box_distance(kind, b, t), p, step)


def relative_error(analytic: ParamGradient, numeric: ParamGradient) -> float:
    """Max-norm error relative to the larger of the two gradients' max norms."""
    a, n = analytic.as_array(), numeric.as_array()
    scale = max(np.abs(a).max(), np.abs(n).max())
    err = np.abs(a - n).max()
    if scale == 0.0:
        return float(err)
    return float(err / scale)


def random_pair(rng: np.random.Generator):
    """Predicted/target pair from the gradient-check distribution.

    Sizes in [0.5, 20], |dtheta| <= 1.2 rad, centers within 2 units of each other.
    """
    wt, ht, wp, hp = rng.uniform(0.5, 20.0, size=4)
    tht = rng.uniform(-math.pi / 2, math.pi / 2)
    dth = rng.uniform(-1.2, 1.2)
    xt, yt = rng.uniform(-10, 10, size=2)
    r = rng.uniform(0, 2)
    phi = rng.uniform(0, 2 * math.pi)
    t = RotatedBox(xt, yt, wt, ht, tht)
    p = RotatedBox(xt + r * math.cos(phi), yt + r * math.sin(phi), wp, hp, tht + dth)
    return p, t


@dataclass
class GradCheckReport:
    kind: DistanceKind
    trials: int
    tolerance: float
    max_rel_error: float
    errors: list = field(repr=False, default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def worst(self):
        if not self.errors:
            return None
        return max(self.errors, key=lambda e: e[1])


def grad_check(kind: DistanceKind, trials: int = 1000, tolerance: float = 1e-5,
               seed: int = 0, step: float = FD_STEP) -> GradCheckReport:
    """Compare analytic and central-difference gradients on seeded random pairs.

    Returns a report; exceeding the tolerance is recorded, not raised.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    pairs = [random_pair(rng) for _ in range(trials)]
    errors = []
    for i, (p, t) in enumerate(pairs):
        err = relative_error(distance_grad(kind, p, t), finite_diff_grad(kind, p, t, step))
        errors.append((i, err, p, t))
    failures = [e for e in errors if not err_ok(e[1], tolerance)]
    return GradCheckReport(kind, trials, tolerance, max(e[1] for e in errors), errors, failures)


def err_ok(err: float, tol: float) -> bool:
    return math.isfinite(err) and err <= tol


def closed_form_theta_grad(w: float, h: float, dtheta: float) -> float:
    """d/dtheta_p of forward KLD when only the angle differs (sizes and centers matched)."""
    return 0.5 * (h * h / (w * w) + w * w / (h * h) - 2) * math.sin(2 * dtheta)

