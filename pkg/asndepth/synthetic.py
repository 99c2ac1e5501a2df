"""Analytic scenes with exact depth, normals and segment IDs.

Every renderer intersects the per-pixel camera rays with analytic surfaces,
so back-projecting a scene's depth lands exactly on the defining surface.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .backproject import view_align_many
from .config import SceneConfig
from .core_types import DepthMap, GuidanceFeatureMap, Intrinsics, NormalMap
from .errors import ContractError, DomainError

logger = logging.getLogger(__name__)

NO_SEGMENT = -1
_PARALLEL_EPS = 1e-12


@dataclass(frozen=True)
class Scene:
    depth: DepthMap
    normals_gt: NormalMap
    segments: np.ndarray
    intr: Intrinsics
    kind: str = "custom"
    # column of the step edge or wedge crease
    edge_col: int | None = None

    def __post_init__(self) -> None:
        segments = np.array(self.segments, dtype=np.int32)
        segments.setflags(write=False)
        object.__setattr__(self, "segments", segments)


def _plane_hits(rays: np.ndarray, normal, offset: float) -> tuple[np.ndarray, np.ndarray]:
    """Ray parameter ``t`` (== depth, rays have z = 1) on plane ``n . P = d``."""
    denom = rays @ np.asarray(normal, dtype=np.float64)
    safe = np.abs(denom) > _PARALLEL_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(safe, offset / np.where(safe, denom, 1.0), np.nan)
    ok = safe & np.isfinite(t) & (t > 0)
    return np.where(ok, t, 0.0), ok


def _oriented(normals: np.ndarray, points: np.ndarray, valid: np.ndarray) -> NormalMap:
    norms = np.linalg.norm(normals, axis=-1, keepdims=True)
    unit = normals / np.where(norms > 0, norms, 1.0)
    aligned, _ = view_align_many(unit, points)
    return NormalMap(np.where(valid[..., None], aligned, 0.0), valid)


def gen_plane(intr: Intrinsics, normal, offset: float) -> Scene:
    """Plane ``normal . P = offset``; pixels whose ray misses it are invalid."""
    rays = intr.rays()
    depth, valid = _plane_hits(rays, normal, offset)
    if not valid.all():
        logger.warning("plane misses %d of %d rays", int((~valid).sum()), valid.size)
    n = np.broadcast_to(np.asarray(normal, dtype=np.float64), rays.shape)
    return Scene(
        depth=DepthMap(depth, valid),
        normals_gt=_oriented(n, rays * depth[..., None], valid),
        segments=np.where(valid, 0, NO_SEGMENT),
        intr=intr,
        kind="plane",
    )


def gen_hemisphere(
    intr: Intrinsics,
    center=(0.0, 0.0, 3.0),
    radius: float = 1.0,
    background: bool = True,
) -> Scene:
    """Visible half of a sphere; segment 0.

    With ``background`` the remaining rays hit a fronto-parallel backing
    plane through the sphere centre (segment 1); otherwise they are invalid.
    """
    c = np.asarray(center, dtype=np.float64)
    if c[2] - radius <= 0:
        raise DomainError(f"sphere (center z={c[2]}, R={radius}) is not in front of the camera")
    rays = intr.rays()
    a = np.einsum("...i,...i->...", rays, rays)
    b = rays @ c
    disc = b * b - a * (c @ c - radius * radius)
    hit = disc >= 0
    t_sphere = np.where(hit, (b - np.sqrt(np.where(hit, disc, 0.0))) / a, 0.0)
    points = rays * t_sphere[..., None]
    normals = (points - c) / radius

    depth = t_sphere
    valid = hit.copy()
    segments = np.where(hit, 0, NO_SEGMENT)
    if background:
        t_back, back_ok = _plane_hits(rays, (0.0, 0.0, 1.0), c[2])
        fill = ~hit & back_ok
        depth = np.where(fill, t_back, depth)
        normals = np.where(fill[..., None], np.array([0.0, 0.0, -1.0]), normals)
        valid |= fill
        segments = np.where(fill, 1, segments)
    points = rays * depth[..., None]
    return Scene(
        depth=DepthMap(depth, valid),
        normals_gt=_oriented(normals, points, valid),
        segments=segments,
        intr=intr,
        kind="hemisphere",
    )


def gen_step(intr: Intrinsics, near: float, far: float, edge_col: int) -> Scene:
    """Two fronto-parallel planes: columns ``< edge_col`` at ``near`` (segment 0), the rest at ``far``."""
    u = np.arange(intr.width)[None, :]
    left = np.broadcast_to(u < edge_col, intr.shape)
    depth = np.where(left, float(near), float(far))
    valid = np.ones(intr.shape, dtype=bool)
    return Scene(
        depth=DepthMap(depth, valid),
        normals_gt=NormalMap.uniform((0.0, 0.0, -1.0), intr.shape),
        segments=np.where(left, 0, 1),
        intr=intr,
        kind="step",
        edge_col=int(edge_col),
    )


def gen_wedge(
    intr: Intrinsics, crease_col: int, crease_depth: float = 3.0, slopes: tuple[float, float] = (0.5, -0.5)
) -> Scene:
    """Two planes ``z = z0 + k_i (x - x0)`` meeting along the vertical line through ``crease_col``.

    Each pixel shows the nearer plane; ties on the crease go to segment 0.
    """
    z0 = float(crease_depth)
    x0 = z0 * (crease_col - intr.cx) / intr.fx
    rays = intr.rays()
    depths, oks, normals = [], [], []
    for k in slopes:
        n = np.array([-k, 0.0, 1.0])
        t, ok = _plane_hits(rays, n, z0 - k * x0)
        depths.append(np.where(ok, t, np.inf))
        oks.append(ok)
        normals.append(n)
    second = depths[1] < depths[0]
    depth = np.where(second, depths[1], depths[0])
    valid = np.where(second, oks[1], oks[0])
    depth = np.where(valid, depth, 0.0)
    n = np.where(second[..., None], normals[1], normals[0])
    return Scene(
        depth=DepthMap(depth, valid),
        normals_gt=_oriented(n, rays * depth[..., None], valid),
        segments=np.where(valid, second.astype(np.int32), NO_SEGMENT),
        intr=intr,
        kind="wedge",
        edge_col=int(crease_col),
    )


def add_noise(scene: Scene, sigma: float, seed: int, correlation: float = 0.0) -> Scene:
    """``N(0, sigma^2)`` depth noise on valid pixels; ground truth untouched.

    With ``correlation == 0`` the noise is i.i.d. per pixel. Otherwise the
    white field is Gaussian-blurred with std ``correlation`` px and rescaled
    back to std ``sigma``. Pixels pushed to a non-positive depth become invalid.
    """
    if sigma < 0:
        raise ContractError(f"sigma must be >= 0, got {sigma}")
    if correlation < 0:
        raise ContractError(f"correlation must be >= 0, got {correlation}")
    if sigma == 0:
        return scene
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=scene.depth.shape)
    if correlation > 0:
        noise = gaussian_filter(noise, sigma=correlation, mode="reflect")
        noise *= sigma / noise.std()
    values = np.where(scene.depth.valid, scene.depth.values + noise, scene.depth.values)
    valid = scene.depth.valid & (values > 0)
    lost = int(scene.depth.valid.sum() - valid.sum())
    if lost:
        logger.warning("noise pushed %d depths to <= 0; marked invalid", lost)
    return replace(scene, depth=DepthMap(np.where(valid, values, 0.0), valid))


def segment_guidance(segments: np.ndarray, separation: float = 10.0) -> GuidanceFeatureMap:
    """One-hot segment ID times ``separation``; pixels without a segment get the zero vector."""
    segments = np.asarray(segments)
    n_seg = max(int(segments.max()) + 1, 1)
    features = np.zeros((*segments.shape, n_seg))
    v, u = np.nonzero(segments >= 0)
    features[v, u, segments[v, u]] = separation
    return GuidanceFeatureMap(features)


def oracle_guidance(scene: Scene, separation: float = 10.0) -> GuidanceFeatureMap:
    """Guidance that separates the scene's analytic surface pieces perfectly."""
    return segment_guidance(scene.segments, separation)


DEFAULT_PLANE = ((0.3, -0.2, 1.0), 3.0)


def make_scene(cfg: SceneConfig) -> Scene:
    """Standard scene of ``cfg.kind`` at ``cfg.res``, with ``cfg.sigma`` metres of depth noise
    (blurred over ``cfg.correlation`` px when non-zero)."""
    intr = Intrinsics.for_resolution(cfg.res)
    if cfg.kind == "plane":
        scene = gen_plane(intr, *DEFAULT_PLANE)
    elif cfg.kind == "hemisphere":
        scene = gen_hemisphere(intr, (0.0, 0.0, cfg.distance), cfg.radius, background=cfg.background)
    elif cfg.kind == "step":
        scene = gen_step(intr, cfg.distance - cfg.radius, cfg.distance, cfg.res // 2)
    else:
        scene = gen_wedge(intr, cfg.res // 2, cfg.distance)
    return add_noise(scene, cfg.sigma, cfg.seed, cfg.correlation)
