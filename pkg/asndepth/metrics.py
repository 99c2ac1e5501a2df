"""Depth, surface normal and point cloud error metrics.

All thresholds are strict (``<``). Reductions run over the jointly valid
pixels in row-major order.
"""

from __future__ import annotations

import numpy as np

from .core_types import DepthMap, NormalMap, PointMap
from .errors import ContractError, NumericalError

NORMAL_THRESHOLDS_DEG = (11.25, 22.5, 30.0)
CLOUD_THRESHOLDS_M = (0.1, 0.3, 0.5)


def _joint(pred, gt, what: str) -> np.ndarray:
    if pred.shape != gt.shape:
        raise ContractError(f"{what} maps disagree: {pred.shape} vs {gt.shape}")
    mask = pred.valid & gt.valid
    if not mask.any():
        raise NumericalError(f"no jointly valid pixels for {what} metrics")
    return mask


def lower_median(values: np.ndarray) -> float:
    """Median; for even counts the lower of the two middle values."""
    ordered = np.sort(values, kind="stable")
    return float(ordered[(len(ordered) - 1) // 2])


def depth_metrics(pred: DepthMap, gt: DepthMap) -> dict[str, float]:
    mask = _joint(pred, gt, "depth")
    d, g = pred.values[mask], gt.values[mask]
    ratio = np.maximum(d / g, g / d)
    return {
        "rel": float(np.mean(np.abs(d - g) / g)),
        "log10": float(np.mean(np.abs(np.log10(d) - np.log10(g)))),
        "rms": float(np.sqrt(np.mean((d - g) ** 2))),
        "delta1": float(np.mean(ratio < 1.25)),
        "delta2": float(np.mean(ratio < 1.25**2)),
        "delta3": float(np.mean(ratio < 1.25**3)),
    }


def angle_errors_deg(pred: NormalMap, gt: NormalMap, mask: np.ndarray | None = None) -> np.ndarray:
    """Per-pixel angle in degrees over ``mask`` (default: jointly valid pixels).

    Uses ``atan2(|a x b|, a . b)``, which equals ``arccos`` of the clamped dot
    product for unit vectors but keeps full precision near 0 and 180 degrees.
    """
    joint = _joint(pred, gt, "normal")
    if mask is not None:
        joint = joint & mask
        if not joint.any():
            raise NumericalError("no jointly valid pixels inside the evaluation mask")
    a, b = pred.normals[joint], gt.normals[joint]
    dots = np.einsum("pi,pi->p", a, b)
    sines = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.degrees(np.arctan2(sines, dots))


def normal_metrics(pred: NormalMap, gt: NormalMap, mask: np.ndarray | None = None) -> dict[str, float]:
    angles = angle_errors_deg(pred, gt, mask)
    out = {"mean": float(np.mean(angles)), "median": lower_median(angles)}
    for t in NORMAL_THRESHOLDS_DEG:
        out[f"within_{t:g}"] = float(np.mean(angles < t))
    return out


def pointcloud_metrics(pred: PointMap, gt: PointMap) -> dict[str, float]:
    """Pixel-wise correspondence; no nearest-neighbour search."""
    mask = _joint(pred, gt, "point cloud")
    dist = np.linalg.norm(pred.points[mask] - gt.points[mask], axis=-1)
    out = {"dist": float(np.mean(dist)), "rms": float(np.sqrt(np.mean(dist**2)))}
    for t in CLOUD_THRESHOLDS_M:
        out[f"within_{t:g}m"] = float(np.mean(dist < t))
    return out
