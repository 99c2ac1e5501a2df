"""Adaptive surface normals.

For a target pixel, ``K`` random triplets from its ``r x r`` patch each give a
candidate normal (cross product of two triangle edges, oriented towards the
camera). The candidates are combined with weight ``s_k * g_k`` where ``s_k``
is the triangle's projected area on the image and ``g_k`` the product of the
three members' normalised Gaussian kernel weights on the guidance features.
The combined vector is normalised and oriented towards the camera.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import sampling
from .backproject import view_align
from .config import AsnConfig
from .core_types import GuidanceFeatureMap, NormalMap, PointMap, TripletSet
from .errors import ContractError
from .parallel import map_row_blocks

logger = logging.getLogger(__name__)

DEGENERATE_CROSS = 1e-12
# |cos| between a normal and its viewing ray below which the camera-facing flip is unstable
FLIP_TOL = 1e-4


def candidate_normal(pa, pb, pc, center) -> np.ndarray | None:
    """Camera-facing unit normal of triangle ``(pa, pb, pc)``; ``None`` if degenerate in 3D."""
    pa, pb, pc = (np.asarray(p, dtype=np.float64) for p in (pa, pb, pc))
    cross = np.cross(pb - pa, pc - pa)
    if not np.linalg.norm(cross) > DEGENERATE_CROSS:
        return None
    return view_align(cross, center)


def similarity_kernel(fi, fj) -> float:
    """Unnormalised kernel ``exp(-0.5 * ||fi - fj||_2)``."""
    return float(np.exp(-0.5 * np.linalg.norm(np.asarray(fi, float) - np.asarray(fj, float))))


def similarity_weights(f: GuidanceFeatureMap, center: tuple[int, int], patch: sampling.Patch) -> np.ndarray:
    """Normalised kernel weight of every patch entry; invalid entries get 0, the rest sum to 1."""
    u0, v0 = center
    fi = f.features[v0, u0]
    weights = np.zeros(len(patch.offsets))
    idx = np.flatnonzero(patch.valid)
    if idx.size == 0:
        return weights
    u = u0 + patch.offsets[idx, 0]
    v = v0 + patch.offsets[idx, 1]
    dist = np.linalg.norm(f.features[v, u] - fi, axis=-1)
    kernel = np.exp(-0.5 * dist)
    weights[idx] = kernel / kernel.sum()
    return weights


def triplet_confidence(weights: np.ndarray, triplet) -> float:
    """``g_k``: product of the three members' normalised weights."""
    a, b, c = (int(t) for t in triplet)
    return float(weights[a] * weights[b] * weights[c])


def projected_area(a, b, c) -> float:
    """Area of the image-plane triangle ``(a, b, c)`` in px^2."""
    return float(sampling.triangle_areas(np.array([a, b, c], dtype=np.float64)[None])[0])


@dataclass(frozen=True)
class AsnBlock:
    """Intermediate state of one row block, reused by the loss gradient.

    Shapes: ``P`` pixels, ``K`` triplet slots.
    """

    v0: int
    v1: int
    entries: np.ndarray  # (P, K, 3) patch entry indices
    live: np.ndarray  # (P, K) candidate contributes
    tri: np.ndarray  # (P, K, 3, 3) member points A, B, C
    center: np.ndarray  # (P, 3)
    cross: np.ndarray  # (P, K, 3) unnormalised candidate normals
    cross_norm: np.ndarray  # (P, K)
    cand_sign: np.ndarray  # (P, K) camera-facing flip per candidate
    areas: np.ndarray  # (P, K)
    confidences: np.ndarray  # (P, K) raw g_k
    weights: np.ndarray  # (P, K) weights actually used
    weight_sum: np.ndarray  # (P,)
    combined: np.ndarray  # (P, 3) weighted mean before normalisation
    combined_norm: np.ndarray  # (P,)
    sign: np.ndarray  # (P,) final camera-facing flip
    normals: np.ndarray  # (P, 3)
    valid: np.ndarray  # (P,)
    fallback: np.ndarray  # (P,) zero total weight, unweighted mean used
    near_flip: np.ndarray  # (P,) some orientation test is within FLIP_TOL


class _Raster:
    """Padded rasters shared read-only by the row-block workers."""

    def __init__(self, pm: PointMap, f: GuidanceFeatureMap, cfg: AsnConfig) -> None:
        r = cfg.sampler.patch_size
        m = r // 2
        self.cfg = cfg
        self.width = pm.width
        self.r = r
        self.offsets = sampling.patch_offsets(r)
        points = sampling.pad_raster(np.where(pm.valid[..., None], pm.points, 0.0), m, 0.0)
        self.points = points.reshape(-1, 3)
        self.valid = sampling.pad_raster(pm.valid, m, False)
        # flat index step of every patch entry, relative to the patch's top-left corner
        self.entry_step = (self.offsets[:, 1] + m) * points.shape[1] + (self.offsets[:, 0] + m)
        self.features = sampling.pad_raster(f.features, m, 0.0) if cfg.use_context else None
        # every live g_k is equal under a constant map
        self.flat_context = not cfg.use_context or bool(np.ptp(f.features) == 0)

    def _draw(self, v0: int, v1: int) -> tuple[np.ndarray, ...]:
        """Patch validity, triplets, member points ``(P, K, 3, 3)`` and centre points of rows ``[v0, v1)``."""
        r, width = self.r, self.width
        ci = r * r // 2
        pvalid = sampling.gather_patches(self.valid, v0, v1, width, r)
        keys = sampling.block_keys(self.cfg.sampler.seed, v0, v1, width)
        entries, kept, areas = sampling.draw_triplets(pvalid, keys, self.offsets, self.cfg.sampler)
        kept &= pvalid[:, ci][:, None]
        v, u = np.divmod(np.arange(len(keys)), width)
        corner = (v + v0) * (width + r - 1) + u
        tri = self.points.take(corner[:, None, None] + self.entry_step[entries], axis=0)
        center = self.points.take(corner + self.entry_step[ci], axis=0)
        return pvalid, entries, kept, areas, tri, center

    def _confidences(self, v0: int, v1: int, pvalid: np.ndarray, entries: np.ndarray, live: np.ndarray):
        """Raw ``g_k`` and ``g_k`` rescaled by its per-pixel maximum over live slots."""
        r = self.r
        ci = r * r // 2
        n_pix, k = live.shape
        feats = sampling.gather_patches(self.features, v0, v1, self.width, r)
        dist = np.linalg.norm(feats - feats[:, ci : ci + 1], axis=-1)
        kernel = np.where(pvalid, np.exp(-0.5 * dist), 0.0)
        total = kernel.sum(axis=1, keepdims=True)
        lbar = kernel / np.where(total > 0, total, 1.0)
        member = np.take_along_axis(lbar, entries.reshape(n_pix, k * 3), axis=1).reshape(n_pix, k, 3)
        conf = member[..., 0] * member[..., 1] * member[..., 2]
        # the weighted mean is invariant to a per-pixel positive rescale of g_k
        gmax = np.where(live, conf, 0.0).max(axis=1, keepdims=True)
        return conf, conf / np.where(gmax > 0, gmax, 1.0)

    def forward(self, v0: int, v1: int) -> tuple[np.ndarray, np.ndarray]:
        """Normals and validity of rows ``[v0, v1)`` without the gradient state."""
        cfg = self.cfg
        pvalid, entries, kept, areas, tri, center = self._draw(v0, v1)
        _, _, live, _, _, aligned = _candidates(tri, kept, center)
        weights = areas if cfg.use_area else np.ones(live.shape)
        if not self.flat_context:
            weights = weights * self._confidences(v0, v1, pvalid, entries, live)[1]
        weights = np.where(live, weights, 0.0)
        _, _, combined, has_live, _ = _combine(weights, aligned, live)
        _, valid, _, _, normals = _orient(combined, has_live, center)
        return normals, valid

    def block(self, v0: int, v1: int) -> AsnBlock:
        cfg = self.cfg
        pvalid, entries, kept, areas, tri, center = self._draw(v0, v1)
        cross, cross_norm, live, cand_dot, cand_sign, aligned = _candidates(tri, kept, center)
        if cfg.use_context:
            conf, rel_conf = self._confidences(v0, v1, pvalid, entries, live)
        else:
            conf = rel_conf = np.ones(live.shape)

        area_w = areas if cfg.use_area else np.ones(live.shape)
        weights = np.where(live, area_w * rel_conf, 0.0)
        weights, weight_sum, combined, has_live, fallback = _combine(weights, aligned, live)
        combined_norm, valid, final_dot, sign, normals = _orient(combined, has_live, center)

        center_norm = np.linalg.norm(center, axis=-1)
        safe_center = np.where(center_norm > 0, center_norm, 1.0)
        cand_cos = np.abs(cand_dot) / safe_center[:, None]
        near_flip = (live & (cand_cos < FLIP_TOL)).any(axis=1) | (valid & (np.abs(final_dot) / safe_center < FLIP_TOL))

        return AsnBlock(
            v0=v0, v1=v1, entries=entries, live=live, tri=tri, center=center,
            cross=cross, cross_norm=cross_norm, cand_sign=cand_sign, areas=areas,
            confidences=conf, weights=weights, weight_sum=weight_sum, combined=combined,
            combined_norm=combined_norm, sign=sign, normals=normals, valid=valid,
            fallback=fallback, near_flip=near_flip,
        )


def _candidates(tri: np.ndarray, kept: np.ndarray, center: np.ndarray):
    """Cross products, liveness and camera-facing unit candidates of ``(P, K)`` triplets."""
    cross = np.cross(tri[:, :, 1] - tri[:, :, 0], tri[:, :, 2] - tri[:, :, 0])
    cross_norm = np.linalg.norm(cross, axis=-1)
    live = kept & (cross_norm > DEGENERATE_CROSS)
    unit = cross / np.where(live, cross_norm, 1.0)[..., None]
    cand_dot = np.einsum("pki,pi->pk", unit, center)
    cand_sign = np.where(cand_dot > 0, -1.0, 1.0)
    return cross, cross_norm, live, cand_dot, cand_sign, unit * cand_sign[..., None]


def _combine(weights: np.ndarray, aligned: np.ndarray, live: np.ndarray):
    """Weighted mean of the candidates, in slot order; zero total weight falls back to the plain mean."""
    has_live = live.any(axis=1)
    weight_sum = weights.sum(axis=1)
    fallback = has_live & ~(weight_sum > 0)
    if fallback.any():
        logger.warning("%d pixels have zero total weight; using the unweighted mean", int(fallback.sum()))
        weights = np.where(fallback[:, None], live.astype(np.float64), weights)
        weight_sum = weights.sum(axis=1)
    combined = (weights[..., None] * aligned).sum(axis=1) / np.where(weight_sum > 0, weight_sum, 1.0)[:, None]
    return weights, weight_sum, combined, has_live, fallback


def _orient(combined: np.ndarray, has_live: np.ndarray, center: np.ndarray):
    combined_norm = np.linalg.norm(combined, axis=-1)
    valid = has_live & (combined_norm > DEGENERATE_CROSS)
    direction = combined / np.where(valid, combined_norm, 1.0)[:, None]
    final_dot = np.einsum("pi,pi->p", direction, center)
    sign = np.where(final_dot > 0, -1.0, 1.0)
    normals = np.where(valid[:, None], direction * sign[:, None], 0.0)
    return combined_norm, valid, final_dot, sign, normals


def asn_blocks(pm: PointMap, f: GuidanceFeatureMap, cfg: AsnConfig, threads: int = 1) -> list[AsnBlock]:
    if f.shape != pm.shape:
        raise ContractError(f"guidance {f.shape} and point map {pm.shape} disagree")
    raster = _Raster(pm, f, cfg)
    return map_row_blocks(raster.block, pm.height, threads)


def asn_normals(pm: PointMap, f: GuidanceFeatureMap, cfg: AsnConfig, threads: int = 1) -> NormalMap:
    """Adaptive surface normal of every pixel of ``pm``."""
    if f.shape != pm.shape:
        raise ContractError(f"guidance {f.shape} and point map {pm.shape} disagree")
    parts = map_row_blocks(_Raster(pm, f, cfg).forward, pm.height, threads)
    normals = np.concatenate([n for n, _ in parts]).reshape(pm.height, pm.width, 3)
    valid = np.concatenate([ok for _, ok in parts]).reshape(pm.shape)
    n_missing = int((pm.valid & ~valid).sum())
    if n_missing:
        logger.warning("%d valid pixels got no normal (too few usable neighbours)", n_missing)
    logger.debug("asn normals: %d valid of %d", int(valid.sum()), valid.size)
    return NormalMap(normals, valid)


def pixel_triplets(pm: PointMap, f: GuidanceFeatureMap, cfg: AsnConfig, center: tuple[int, int]) -> TripletSet:
    """Fully filled triplet set of one pixel, as used by :func:`asn_normals`."""
    u, v = center
    raster = _Raster(pm, f, cfg)
    block = raster.block(v, v + 1)
    live = block.live[u]
    entries = block.entries[u][live]
    unit = block.cross[u][live] / block.cross_norm[u][live][:, None]
    return TripletSet(
        center=(int(u), int(v)),
        entries=entries,
        offsets=raster.offsets[entries],
        areas=block.areas[u][live],
        confidences=block.confidences[u][live],
        normals=unit * block.cand_sign[u][live][:, None],
    )


def resolve_guidance(
    cfg: AsnConfig, shape: tuple[int, int], segments: np.ndarray | None = None
) -> GuidanceFeatureMap:
    """Build the guidance feature map named by ``cfg.guidance``."""
    if cfg.guidance == "constant":
        return GuidanceFeatureMap.constant(shape)
    if cfg.guidance == "oracle":
        if segments is None:
            raise ContractError("oracle guidance needs a segment raster")
        from .synthetic import segment_guidance

        return segment_guidance(segments, cfg.oracle_separation)
    from .io import read_guidance

    f = read_guidance(cfg.guidance_path, scale=cfg.guidance_scale)
    if f.shape != shape:
        raise ContractError(f"guidance raster {f.shape} does not match image {shape}")
    return f
