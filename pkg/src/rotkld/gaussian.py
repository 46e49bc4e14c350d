"""Box <-> 2-D Gaussian conversion and closed-form distances between Gaussians.

All covariance algebra is done on explicit 2x2 arrays; nothing here needs a
general linear-algebra routine beyond numpy's small-matrix helpers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .geometry import RotatedBox, SizeDegenerate, wrap_angle

EIG_EPS = 1e-24
NEG_FLOOR = 1e-12
SYM_TOL = 1e-12


class DistanceKind(enum.Enum):
    KLD_FORWARD = "kld_forward"  # D(N_p || N_t)
    KLD_REVERSE = "kld_reverse"  # D(N_t || N_p)
    KLD_MIN = "kld_min"
    KLD_MAX = "kld_max"
    JS = "js"
    JEFFREYS = "jeffreys"
    GWD = "gwd"

    @classmethod
    def parse(cls, name: str) -> "DistanceKind":
        key = name.strip().lower().replace("-", "_")
        aliases = {"kld": "kld_forward", "kl": "kld_forward", "jef": "jeffreys", "wasserstein": "gwd"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown distance kind {name!r}; choose from "
                             f"{', '.join(k.value for k in cls)}") from None


KLD_VARIANTS = (DistanceKind.KLD_MIN, DistanceKind.KLD_MAX, DistanceKind.JS, DistanceKind.JEFFREYS)
SCALE_INVARIANT_KINDS = tuple(k for k in DistanceKind if k is not DistanceKind.GWD)


@dataclass(frozen=True)
class Gaussian2D:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(2)
        sigma = np.array(self.sigma, dtype=float).reshape(2, 2)
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("non-finite Gaussian parameters")
        scale = max(np.abs(sigma).max(), np.finfo(float).tiny)
        if abs(sigma[0, 1] - sigma[1, 0]) > SYM_TOL * scale:
            raise ValueError(f"covariance is not symmetric: {sigma.tolist()}")
        sigma[1, 0] = sigma[0, 1]
        if sigma[0, 0] <= 0 or sigma[0, 0] * sigma[1, 1] - sigma[0, 1] ** 2 <= 0:
            raise SizeDegenerate(f"covariance is not positive definite: {sigma.tolist()}")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def _trusted(cls, mu: np.ndarray, sigma: np.ndarray) -> "Gaussian2D":
        # skips validation; for callers that build sigma PD by construction
        obj = object.__new__(cls)
        object.__setattr__(obj, "mu", mu)
        object.__setattr__(obj, "sigma", sigma)
        return obj

    def transformed(self, m) -> "Gaussian2D":
        """Push the distribution through x -> M x."""
        m = np.asarray(m, dtype=float)
        s = m @ self.sigma @ m.T
        return Gaussian2D(m @ self.mu, 0.5 * (s + s.T))


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def box_to_gaussian(box: RotatedBox) -> Gaussian2D:
    """Gaussian whose square-root covariance is R diag(w/2, h/2) R^T.

    Built as a*u u^T + b*v v^T with the unit axes u, v, which is symmetric by
    construction.
    """
    c, s = math.cos(box.theta), math.sin(box.theta)
    a, b = box.w * box.w / 4, box.h * box.h / 4
    sxx = a * c * c + b * s * s
    syy = a * s * s + b * c * c
    sxy = (a - b) * c * s
    return Gaussian2D._trusted(np.array([box.x, box.y]), np.array([[sxx, sxy], [sxy, syy]]))


def gaussian_to_box(g: Gaussian2D) -> RotatedBox:
    """Inverse of :func:`box_to_gaussian`. Isotropic covariances map to theta = 0."""
    sxx, sxy, syy = g.sigma[0, 0], g.sigma[0, 1], g.sigma[1, 1]
    mean = 0.5 * (sxx + syy)
    rad = math.hypot(0.5 * (sxx - syy), sxy)
    lam1, lam2 = mean + rad, mean - rad
    if lam2 <= EIG_EPS:
        raise SizeDegenerate(f"covariance eigenvalue {lam2} too small")
    # major-axis angle; atan2(0, 0) = 0 is the isotropic tie-break
    theta = 0.5 * math.atan2(2 * sxy, sxx - syy)
    return RotatedBox(g.mu[0], g.mu[1], 2 * math.sqrt(lam1), 2 * math.sqrt(lam2), wrap_angle(theta))


def _inv2(s: np.ndarray):
    det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
    inv = np.array([[s[1, 1], -s[0, 1]], [-s[1, 0], s[0, 0]]]) / det
    return inv, det


def _floor(d: float) -> float:
    return 0.0 if -NEG_FLOOR <= d < 0 else d


def _kl_value(mu_a, s_a, mu_b, s_b) -> float:
    # Scalar form. With a == b the trace term is exactly 2 and the log term
    # exactly 0 (doubling is exact in binary), so KL(a || a) == 0 bit for bit.
    a00, a11, a01 = float(s_a[0, 0]), float(s_a[1, 1]), 0.5 * float(s_a[0, 1] + s_a[1, 0])
    b00, b11, b01 = float(s_b[0, 0]), float(s_b[1, 1]), 0.5 * float(s_b[0, 1] + s_b[1, 0])
    det_a = a00 * a11 - a01 * a01
    det_b = b00 * b11 - b01 * b01
    dx, dy = float(mu_a[0] - mu_b[0]), float(mu_a[1] - mu_b[1])
    maha = (b11 * dx * dx - 2 * b01 * dx * dy + b00 * dy * dy) / det_b
    tr = (a00 * b11 + a11 * b00 - 2 * a01 * b01) / det_b
    return 0.5 * (maha + tr + math.log(det_b / det_a)) - 1.0


def kl_parts(mu_a, s_a, mu_b, s_b):
    """KL(N_a || N_b) and its partials w.r.t. (mu_a, S_a, mu_b, S_b).

    Matrix partials are the symmetric gradients, i.e. dD = <G, dS> for symmetric dS.
    """
    inv_b, _ = _inv2(s_b)
    inv_a, _ = _inv2(s_a)
    d = mu_a - mu_b
    ib_d = inv_b @ d
    value = _kl_value(mu_a, s_a, mu_b, s_b)
    g_mu_a = ib_d
    g_s_a = 0.5 * (inv_b - inv_a)
    g_mu_b = -ib_d
    g_s_b = 0.5 * (inv_b - inv_b @ (s_a + np.outer(d, d)) @ inv_b)
    return value, g_mu_a, g_s_a, g_mu_b, g_s_b


def kl_divergence(a: Gaussian2D, b: Gaussian2D) -> float:
    """Closed-form KL(N_a || N_b) for 2-D Gaussians."""
    return _floor(_kl_value(a.mu, a.sigma, b.mu, b.sigma))


def kld_forward(p: Gaussian2D, t: Gaussian2D) -> float:
    return kl_divergence(p, t)


def kld_reverse(p: Gaussian2D, t: Gaussian2D) -> float:
    return kl_divergence(t, p)


def sqrtm_spd2(a: np.ndarray) -> np.ndarray:
    """Principal square root of a 2x2 SPD matrix: (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A))."""
    sd = math.sqrt(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])
    return (a + sd * np.eye(2)) / math.sqrt(a[0, 0] + a[1, 1] + 2 * sd)


def gwd_squared(p: Gaussian2D, t: Gaussian2D) -> float:
    """Squared Wasserstein-2 distance between two Gaussians.

    With A = Sp^1/2, B = St^1/2 and M = B A, the covariance term
    tr(Sp + St - 2 (A St A)^1/2) equals |A - B|_F^2 - 2 (|M|_* - tr M), and for
    2x2 matrices |M|_*^2 - (tr M)^2 = (m01 - m10)^2. Both pieces vanish together
    as Sp -> St, so nearly equal covariances do not lose digits to cancellation.
    """
    d = p.mu - t.mu
    a, b = sqrtm_spd2(p.sigma), sqrtm_spd2(t.sigma)
    m = b @ a
    tr_m = m[0, 0] + m[1, 1]
    nuc = math.sqrt(max(float(np.sum(m * m)) + 2 * (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]), 0.0))
    skew = m[0, 1] - m[1, 0]
    cov_term = float(np.sum((a - b) ** 2)) - 2 * skew * skew / (nuc + tr_m)
    return _floor(float(d @ d) + cov_term)


def gwd(p: Gaussian2D, t: Gaussian2D) -> float:
    """Gaussian Wasserstein distance (not squared); same length units as the boxes."""
    return math.sqrt(max(gwd_squared(p, t), 0.0))


def js_mixture(p: Gaussian2D, t: Gaussian2D) -> Gaussian2D:
    """Single Gaussian with the first two moments of the mixture (N_p + N_t) / 2."""
    d = p.mu - t.mu
    sigma = 0.5 * (p.sigma + t.sigma) + 0.25 * np.outer(d, d)
    return Gaussian2D(0.5 * (p.mu + t.mu), sigma)


def js_divergence(p: Gaussian2D, t: Gaussian2D) -> float:
    m = js_mixture(p, t)
    return _floor(0.5 * (kl_divergence(t, m) + kl_divergence(p, m)))


def log_density(g: Gaussian2D, pts: np.ndarray) -> np.ndarray:
    """log N(x; mu, sigma) for points of shape (N, 2)."""
    inv, det = _inv2(g.sigma)
    d = pts - g.mu
    q = inv[0, 0] * d[:, 0] ** 2 + 2 * inv[0, 1] * d[:, 0] * d[:, 1] + inv[1, 1] * d[:, 1] ** 2
    return -0.5 * q - 0.5 * math.log(det) - math.log(2 * math.pi)


def js_monte_carlo(p: Gaussian2D, t: Gaussian2D, n: int, rng: np.random.Generator):
    """Sampled JS divergence against the true two-component mixture.

    Half the samples come from each component. Returns (estimate, standard error).
    """
    half = n // 2
    terms = []
    for g in (p, t):
        x = rng.multivariate_normal(g.mu, g.sigma, size=half)
        lp, lt = log_density(p, x), log_density(t, x)
        lm = np.logaddexp(lp, lt) - math.log(2.0)
        terms.append(log_density(g, x) - lm)
    est = 0.5 * (terms[0].mean() + terms[1].mean())
    se = 0.5 * math.sqrt(terms[0].var(ddof=1) / half + terms[1].var(ddof=1) / half)
    return float(est), se


def kld_variant(kind: DistanceKind, p: Gaussian2D, t: Gaussian2D) -> float:
    if kind is DistanceKind.JS:
        return js_divergence(p, t)
    fwd, rev = kld_forward(p, t), kld_reverse(p, t)
    if kind is DistanceKind.KLD_MIN:
        return min(fwd, rev)
    if kind is DistanceKind.KLD_MAX:
        return max(fwd, rev)
    if kind is DistanceKind.JEFFREYS:
        return fwd + rev
    raise ValueError(f"{kind} is not a KLD variant")


def distance(kind: DistanceKind, p: Gaussian2D, t: Gaussian2D) -> float:
    """Dispatch to the distance named by `kind`."""
    if kind is DistanceKind.KLD_FORWARD:
        return kld_forward(p, t)
    if kind is DistanceKind.KLD_REVERSE:
        return kld_reverse(p, t)
    if kind is DistanceKind.GWD:
        return gwd(p, t)
    return kld_variant(kind, p, t)


def box_distance(kind: DistanceKind, p: RotatedBox, t: RotatedBox) -> float:
    return distance(kind, box_to_gaussian(p), box_to_gaussian(t))


# Scalar expansions in box parameters, kept separate from the matrix path so
# each can check the other.

def kld_forward_expanded(p: RotatedBox, t: RotatedBox) -> float:
    dx, dy, dth = p.x - t.x, p.y - t.y, p.theta - t.theta
    ct, st = math.cos(t.theta), math.sin(t.theta)
    center = 4 * (dx * ct + dy * st) ** 2 / t.w**2 + 4 * (dy * ct - dx * st) ** 2 / t.h**2
    s2, c2 = math.sin(dth) ** 2, math.cos(dth) ** 2
    trace = (p.h**2 / t.w**2) * s2 + (p.w**2 / t.h**2) * s2 + (p.h**2 / t.h**2) * c2 + (p.w**2 / t.w**2) * c2
    logdet = math.log(t.h**2 / p.h**2) + math.log(t.w**2 / p.w**2)
    return 0.5 * center + 0.5 * trace + 0.5 * logdet - 1


def kld_reverse_expanded(p: RotatedBox, t: RotatedBox) -> float:
    dx, dy, dth = p.x - t.x, p.y - t.y, p.theta - t.theta
    cp, sp = math.cos(p.theta), math.sin(p.theta)
    center = 4 * (dx * cp + dy * sp) ** 2 / p.w**2 + 4 * (dy * cp - dx * sp) ** 2 / p.h**2
    s2, c2 = math.sin(dth) ** 2, math.cos(dth) ** 2
    trace = (t.h**2 / p.w**2) * s2 + (t.w**2 / p.h**2) * s2 + (t.h**2 / p.h**2) * c2 + (t.w**2 / p.w**2) * c2
    logdet = math.log(p.h**2 / t.h**2) + math.log(p.w**2 / t.w**2)
    return 0.5 * center + 0.5 * trace + 0.5 * logdet - 1


def kld_horizontal(p: RotatedBox, t: RotatedBox) -> float:
    """Forward KLD when both boxes are axis-aligned."""
    dx, dy = p.x - t.x, p.y - t.y
    return 0.5 * (p.w**2 / t.w**2 + p.h**2 / t.h**2 + 4 * dx**2 / t.w**2 + 4 * dy**2 / t.h**2
                  + math.log(t.w**2 / p.w**2) + math.log(t.h**2 / p.h**2) - 2)


def gwd_horizontal(p: RotatedBox, t: RotatedBox) -> float:
    """GWD for axis-aligned boxes: l2 norm of (dx, dy, dw/2, dh/2)."""
    return math.sqrt((p.x - t.x) ** 2 + (p.y - t.y) ** 2 + ((p.w - t.w) ** 2 + (p.h - t.h) ** 2) / 4)
