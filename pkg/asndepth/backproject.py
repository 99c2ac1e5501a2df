"""Depth to camera-space points, and the camera-facing orientation rule."""

from __future__ import annotations

import logging

import numpy as np

from .core_types import DepthMap, Intrinsics, PointMap
from .errors import ContractError, DomainError

logger = logging.getLogger(__name__)


def backproject(depth: DepthMap, intr: Intrinsics) -> PointMap:
    """``P = D(u, v) * ((u - cx) / fx, (v - cy) / fy, 1)`` for every valid pixel."""
    if depth.shape != intr.shape:
        raise ContractError(f"depth is {depth.width}x{depth.height}, intrinsics {intr.width}x{intr.height}")
    values = np.where(depth.valid, depth.values, 0.0)
    points = intr.rays() * values[..., None]
    logger.debug("backprojected %d/%d valid pixels", int(depth.valid.sum()), depth.valid.size)
    return PointMap(points, depth.valid)


def view_align(n, p) -> np.ndarray:
    """Unit normal facing the camera: ``dot(out, p) < 0``.

    When ``dot(n, p) == 0`` the normalised input is returned unflipped.
    """
    n = np.asarray(n, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    norm = float(np.linalg.norm(n))
    if not norm > 0:
        raise DomainError("cannot orient a zero-norm normal")
    unit = n / norm
    return -unit if float(np.dot(unit, p)) > 0 else unit


def view_align_many(normals: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`view_align` over ``(..., 3)`` arrays of unit normals.

    Returns the aligned normals and the applied sign (+1 or -1).
    """
    dots = np.einsum("...i,...i->...", normals, points)
    sign = np.where(dots > 0, -1.0, 1.0)
    return normals * sign[..., None], sign
