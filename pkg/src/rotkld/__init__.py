"""Gaussian distances, gradients and losses for rotated bounding boxes."""

from .gaussian import DistanceKind, Gaussian2D, box_distance, box_to_gaussian, distance, gaussian_to_box
from .geometry import RotatedBox, SizeDegenerate, rotated_iou
from .gradients import ParamGradient, distance_grad, grad_check
from .loss import LossConfig, SqrtAtZero, Transform, gaussian_loss, gaussian_loss_grad

__all__ = [
    "DistanceKind", "Gaussian2D", "LossConfig", "ParamGradient", "RotatedBox", "SizeDegenerate",
    "SqrtAtZero", "Transform", "box_distance", "box_to_gaussian", "distance", "distance_grad",
    "gaussian_loss", "gaussian_loss_grad", "gaussian_to_box", "grad_check", "rotated_iou",
]
