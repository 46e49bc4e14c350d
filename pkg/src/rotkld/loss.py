"""Offset encoding, the smooth-L1 baseline, and the normalized Gaussian regression loss."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .gaussian import DistanceKind, box_distance
from .geometry import RotatedBox, wrap_angle
from .gradients import ParamGradient, distance_value_and_grad

SQRT_ZERO_EPS = 1e-12
SMOOTH_L1_BETA = 1.0


class SqrtAtZero(ArithmeticError):
    """The sqrt transform has an unbounded derivative at zero distance.

    Callers should treat the gradient as zero (the fit has converged).
    """


class Transform(enum.Enum):
    SQRT = "sqrt"
    LOG1P = "log1p"
    # raw distance with no normalization; only for showing why normalization is needed
    NONE = "none"

    @classmethod
    def parse(cls, name: str) -> "Transform":
        key = name.strip().lower()
        key = {"log": "log1p", "ln": "log1p", "identity": "none", "raw": "none"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown transform {name!r}") from None


@dataclass(frozen=True)
class LossConfig:
    kind: DistanceKind = DistanceKind.KLD_FORWARD
    transform: Transform = Transform.LOG1P
    tau: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau >= 1.0):
            raise ValueError(f"tau must be >= 1, got {self.tau}")

    def to_text(self) -> str:
        return f"kind={self.kind.value}\ntransform={self.transform.value}\ntau={self.tau!r}\n"

    @classmethod
    def from_text(cls, text: str) -> "LossConfig":
        """Parse `key=value` lines; blank lines and `#` comments are ignored."""
        vals = parse_key_values(text)
        unknown = set(vals) - {"kind", "transform", "tau"}
        if unknown:
            raise ValueError(f"unknown loss config keys: {sorted(unknown)}")
        kw = {}
        if "kind" in vals:
            kw["kind"] = DistanceKind.parse(vals["kind"])
        if "transform" in vals:
            kw["transform"] = Transform.parse(vals["transform"])
        if "tau" in vals:
            kw["tau"] = float(vals["tau"])
        return cls(**kw)


def parse_key_values(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.lower()] = val
    return out


@dataclass(frozen=True)
class EncodedOffsets:
    t_x: float
    t_y: float
    t_w: float
    t_h: float
    t_theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.t_x, self.t_y, self.t_w, self.t_h, self.t_theta])


def encode_offsets(box: RotatedBox, anchor: RotatedBox) -> EncodedOffsets:
    return EncodedOffsets(
        (box.x - anchor.x) / anchor.w,
        (box.y - anchor.y) / anchor.h,
        math.log(box.w / anchor.w),
        math.log(box.h / anchor.h),
        wrap_angle(box.theta - anchor.theta),
    )


def smooth_l1(d: float, beta: float = SMOOTH_L1_BETA) -> float:
    ad = abs(d)
    return 0.5 * ad * ad / beta if ad < beta else ad - 0.5 * beta


def smooth_l1_prime(d: float, beta: float = SMOOTH_L1_BETA) -> float:
    return d / beta if abs(d) < beta else math.copysign(1.0, d)


def _offset_deltas(pred: EncodedOffsets, target: EncodedOffsets) -> np.ndarray:
    d = pred.as_array() - target.as_array()
    d[4] = wrap_angle(d[4])
    return d


def smooth_l1_loss(pred: EncodedOffsets, target: EncodedOffsets) -> float:
    """Sum of smooth-L1 over the five offset deltas (angle delta wrapped)."""
    return float(sum(smooth_l1(d) for d in _offset_deltas(pred, target)))


def smooth_l1_box_loss(p: RotatedBox, t: RotatedBox, anchor: RotatedBox) -> float:
    return smooth_l1_loss(encode_offsets(p, anchor), encode_offsets(t, anchor))


def smooth_l1_box_grad(p: RotatedBox, t: RotatedBox, anchor: RotatedBox) -> ParamGradient:
    """Gradient of the baseline w.r.t. (x_p, y_p, ln w_p, ln h_p, theta_p) with the anchor fixed."""
    d = _offset_deltas(encode_offsets(p, anchor), encode_offsets(t, anchor))
    k = [smooth_l1_prime(v) for v in d]
    return ParamGradient(k[0] / anchor.w, k[1] / anchor.h, k[2], k[3], k[4])


def _transform(d: float, tr: Transform):
    """f(D) and f'(D)."""
    if tr is Transform.LOG1P:
        return math.log1p(d), 1.0 / (1.0 + d)
    if tr is Transform.SQRT:
        r = math.sqrt(d)
        return r, (0.5 / r if r > 0 else math.inf)
    return d, 1.0


def loss_from_distance(d: float, cfg: LossConfig) -> float:
    """1 - 1/(tau + f(D)); the raw mode returns D itself."""
    if cfg.transform is Transform.NONE:
        return d
    f, _ = _transform(max(d, 0.0), cfg.transform)
    return 1.0 - 1.0 / (cfg.tau + f)


def gaussian_loss(p: RotatedBox, t: RotatedBox, cfg: LossConfig = LossConfig()) -> float:
    return loss_from_distance(box_distance(cfg.kind, p, t), cfg)


def gaussian_loss_value_and_grad(p: RotatedBox, t: RotatedBox, cfg: LossConfig = LossConfig()):
    d, g = distance_value_and_grad(cfg.kind, p, t)
    d = max(d, 0.0)
    if cfg.transform is Transform.NONE:
        return d, g
    if cfg.transform is Transform.SQRT and d < SQRT_ZERO_EPS:
        raise SqrtAtZero(f"sqrt transform at distance {d:g}")
    f, fp = _transform(d, cfg.transform)
    outer = fp / (cfg.tau + f) ** 2
    return 1.0 - 1.0 / (cfg.tau + f), g.scaled(outer)


def gaussian_loss_grad(p: RotatedBox, t: RotatedBox, cfg: LossConfig = LossConfig()) -> ParamGradient:
    return gaussian_loss_value_and_grad(p, t, cfg)[1]
