"""Raster and camera data model.

Conventions: pixel ``(u, v)`` is column ``u``, row ``v``; pixel centres sit at
integer coordinates. Camera frame is x right, y down, z forward. Rasters are
numpy arrays indexed ``[v, u]``, stored as float64 and frozen after
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError

UNIT_TOL = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_grid(name: str, arr: np.ndarray, height: int, width: int, trailing: tuple[int, ...] = ()) -> None:
    expected = (height, width, *trailing)
    if arr.shape != expected:
        raise ContractError(f"{name} has shape {arr.shape}, expected {expected}")


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ContractError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ContractError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ContractError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @classmethod
    def for_resolution(cls, res: int) -> "Intrinsics":
        """Square synthetic camera: ``fx = fy = res``, principal point on pixel ``res // 2``."""
        return cls(fx=float(res), fy=float(res), cx=float(res // 2), cy=float(res // 2), width=res, height=res)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def rays(self) -> np.ndarray:
        """Per-pixel ray ``((u - cx) / fx, (v - cy) / fy, 1)``, shape ``(H, W, 3)``."""
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        out = np.empty((self.height, self.width, 3))
        out[..., 0] = (u - self.cx) / self.fx
        out[..., 1] = (v - self.cy) / self.fy
        out[..., 2] = 1.0
        return out

    def as_dict(self) -> dict[str, float | int]:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy, "width": self.width, "height": self.height}


@dataclass(frozen=True)
class DepthMap:
    """Metric depth with validity mask; ``valid`` implies a finite, positive value."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if values.ndim != 2:
            raise ContractError(f"depth values must be 2-D, got shape {values.shape}")
        _check_grid("depth mask", valid, *values.shape)
        with np.errstate(invalid="ignore"):
            bad = valid & ~(np.isfinite(values) & (values > 0))
        if bad.any():
            v, u = np.argwhere(bad)[0]
            raise ContractError(f"valid depth must be finite and > 0; pixel ({u}, {v}) holds {values[v, u]}")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def from_flat(cls, width: int, height: int, values, valid) -> "DepthMap":
        values = np.asarray(values, dtype=np.float64)
        valid = np.asarray(valid, dtype=bool)
        if values.size != width * height or valid.size != width * height:
            raise ContractError(
                f"grid lengths {values.size}/{valid.size} disagree with {width}x{height}"
            )
        return cls(values.reshape(height, width), valid.reshape(height, width))

    @classmethod
    def dense(cls, values) -> "DepthMap":
        """All finite, positive entries valid."""
        values = np.asarray(values, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            return cls(values, np.isfinite(values) & (values > 0))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def scaled(self, factor: float) -> "DepthMap":
        return DepthMap(np.where(self.valid, self.values * factor, self.values), self.valid)


@dataclass(frozen=True)
class PointMap:
    """Camera-space points; valid points have ``z > 0``."""

    points: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if points.ndim != 3 or points.shape[2] != 3:
            raise ContractError(f"points must have shape (H, W, 3), got {points.shape}")
        _check_grid("point mask", valid, *points.shape[:2])
        with np.errstate(invalid="ignore"):
            bad = valid & ~(points[..., 2] > 0)
        if bad.any():
            raise ContractError(f"{int(bad.sum())} valid points have z <= 0")
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def height(self) -> int:
        return self.points.shape[0]

    @property
    def width(self) -> int:
        return self.points.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.points.shape[:2]  # type: ignore[return-value]


@dataclass(frozen=True)
class NormalMap:
    """Unit normals with validity mask."""

    normals: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        normals = np.array(self.normals, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if normals.ndim != 3 or normals.shape[2] != 3:
            raise ContractError(f"normals must have shape (H, W, 3), got {normals.shape}")
        _check_grid("normal mask", valid, *normals.shape[:2])
        with np.errstate(invalid="ignore"):
            off_unit = valid & ~(np.abs(np.linalg.norm(normals, axis=-1) - 1.0) <= UNIT_TOL)
        if off_unit.any():
            raise ContractError(f"{int(off_unit.sum())} valid normals are not unit length")
        object.__setattr__(self, "normals", _frozen(normals))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def uniform(cls, normal, shape: tuple[int, int]) -> "NormalMap":
        n = np.asarray(normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        return cls(np.broadcast_to(n, (*shape, 3)).copy(), np.ones(shape, dtype=bool))

    @property
    def height(self) -> int:
        return self.normals.shape[0]

    @property
    def width(self) -> int:
        return self.normals.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.normals.shape[:2]  # type: ignore[return-value]

    def is_camera_facing(self, pm: PointMap) -> bool:
        """True when every normal valid in both maps satisfies ``dot(n, P) < 0``."""
        if pm.shape != self.shape:
            raise ContractError(f"point map {pm.shape} and normal map {self.shape} disagree")
        both = self.valid & pm.valid
        dots = np.einsum("...i,...i->...", self.normals[both], pm.points[both])
        return bool(np.all(dots < 0))


@dataclass(frozen=True)
class GuidanceFeatureMap:
    """Per-pixel C-channel feature vectors, shape ``(H, W, C)``."""

    features: np.ndarray

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=np.float64)
        if features.ndim == 2:
            features = features[..., None]
        if features.ndim != 3 or features.shape[2] < 1:
            raise ContractError(f"features must have shape (H, W, C>=1), got {features.shape}")
        if not np.all(np.isfinite(features)):
            raise ContractError("guidance features must be finite")
        object.__setattr__(self, "features", _frozen(features))

    @classmethod
    def constant(cls, shape: tuple[int, int], channels: int = 1) -> "GuidanceFeatureMap":
        return cls(np.zeros((*shape, channels)))

    @property
    def channels(self) -> int:
        return self.features.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.features.shape[:2]  # type: ignore[return-value]


@dataclass(frozen=True)
class TripletSet:
    """The sampled triplets of one target pixel.

    ``offsets[k, t]`` is the ``(du, dv)`` offset of member ``t`` of triplet
    ``k``; ``entries[k, t]`` its index in the row-major ``r x r`` patch.
    ``confidences`` and ``normals`` are NaN until filled by the ASN operator.
    """

    center: tuple[int, int]
    entries: np.ndarray
    offsets: np.ndarray
    areas: np.ndarray
    confidences: np.ndarray = field(default=None)  # type: ignore[assignment]
    normals: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        k = len(self.entries)
        if self.confidences is None:
            object.__setattr__(self, "confidences", np.full(k, np.nan))
        if self.normals is None:
            object.__setattr__(self, "normals", np.full((k, 3), np.nan))
        for name in ("entries", "offsets", "areas", "confidences", "normals"):
            arr = getattr(self, name)
            if len(arr) != k:
                raise ContractError(f"TripletSet.{name} has {len(arr)} rows, expected {k}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def empty(self) -> bool:
        return len(self.entries) == 0


def project(point, intr: Intrinsics) -> tuple[float, float]:
    """Pinhole projection of a camera-space point to subpixel ``(u, v)``."""
    x, y, z = (float(c) for c in point)
    if not (z > 0) or not math.isfinite(z):
        raise DomainError(f"cannot project point with z={z}")
    return (intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy)
