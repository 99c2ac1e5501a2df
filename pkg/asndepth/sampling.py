"""Local patches and seedable triplet sampling.

Each target pixel draws its ``K`` triplets from its own counter-based stream,
so the result for a pixel depends only on ``(seed, pixel, patch validity)``.
Within a triplet the three members are distinct (drawn without replacement);
across triplets members repeat freely. A triplet whose projected 2D area is
below ``collinearity_eps`` is redrawn up to ``max_resample`` times, then
dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import rng
from .config import SamplerConfig
from .core_types import PointMap, TripletSet
from .errors import ContractError

logger = logging.getLogger(__name__)


def patch_offsets(r: int) -> np.ndarray:
    """Row-major ``(du, dv)`` offsets of an ``r x r`` patch; the centre is entry ``r*r // 2``."""
    if r < 1 or r % 2 != 1:
        raise ContractError(f"patch size must be odd, got {r}")
    m = r // 2
    dv, du = np.mgrid[-m : m + 1, -m : m + 1]
    return np.stack([du.ravel(), dv.ravel()], axis=1).astype(np.int64)


@dataclass(frozen=True)
class Patch:
    center: tuple[int, int]
    size: int
    offsets: np.ndarray
    inside: np.ndarray
    valid: np.ndarray

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    @property
    def center_index(self) -> int:
        return self.size * self.size // 2


def extract_patch(pm: PointMap, center: tuple[int, int], r: int) -> Patch:
    """All ``r*r`` neighbours of ``center``; out-of-bounds and invalid entries are flagged."""
    offsets = patch_offsets(r)
    u = center[0] + offsets[:, 0]
    v = center[1] + offsets[:, 1]
    inside = (u >= 0) & (u < pm.width) & (v >= 0) & (v < pm.height)
    valid = np.zeros(len(offsets), dtype=bool)
    valid[inside] = pm.valid[v[inside], u[inside]]
    return Patch(center=(int(center[0]), int(center[1])), size=r, offsets=offsets, inside=inside, valid=valid)


def triangle_areas(offsets: np.ndarray) -> np.ndarray:
    """Projected area ``0.5 * |cross2(b - a, c - a)|`` over a ``(..., 3, 2)`` array."""
    a = offsets[..., 0, :]
    e1 = offsets[..., 1, :] - a
    e2 = offsets[..., 2, :] - a
    return 0.5 * np.abs(e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]).astype(np.float64)


def draw_triplets(
    valid: np.ndarray, keys: np.ndarray, offsets: np.ndarray, cfg: SamplerConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised sampler over ``P`` patches.

    ``valid`` is ``(P, n)``, ``keys`` the ``(P,)`` pixel stream keys. Returns
    ``entries (P, K, 3)``, ``kept (P, K)`` and ``areas (P, K)``. Patches with
    fewer than three valid entries keep nothing.
    """
    n_pix, n = valid.shape
    k, attempts = cfg.k, cfg.max_resample + 1
    n_valid = valid.sum(axis=1).astype(np.int64)
    enough = n_valid >= 3
    keys = np.asarray(keys, dtype=np.uint64)
    full = bool(valid.all())
    # valid entries first, in row-major order
    order = None if full else np.argsort(~valid, axis=1, kind="stable")

    def ranked(ranks: np.ndarray, rows: np.ndarray | None) -> np.ndarray:
        if full:
            return ranks
        if rows is None:
            return np.take_along_axis(order, ranks.reshape(n_pix, -1), axis=1).reshape(ranks.shape)
        return order[rows[:, None], ranks]

    # first attempt of every slot in one broadcast pass
    base = np.arange(k, dtype=np.uint64) * np.uint64(attempts * 3)
    ranks = rng.distinct_triple(keys[:, None], base[None, :], np.maximum(n_valid, 3)[:, None])
    entries = ranked(ranks, None)
    areas = triangle_areas(offsets[entries])
    kept = enough[:, None] & (areas >= cfg.collinearity_eps)
    entries = np.where(kept[..., None], entries, 0)
    areas = np.where(kept, areas, 0.0)
    pend_p, pend_k = np.nonzero(enough[:, None] & ~kept)

    for attempt in range(1, attempts):
        if pend_p.size == 0:
            break
        base = (pend_k.astype(np.uint64) * np.uint64(attempts) + np.uint64(attempt)) * np.uint64(3)
        cand = ranked(rng.distinct_triple(keys[pend_p], base, n_valid[pend_p]), pend_p)
        cand_area = triangle_areas(offsets[cand])
        ok = cand_area >= cfg.collinearity_eps
        hit_p, hit_k = pend_p[ok], pend_k[ok]
        entries[hit_p, hit_k] = cand[ok]
        areas[hit_p, hit_k] = cand_area[ok]
        kept[hit_p, hit_k] = True
        pend_p, pend_k = pend_p[~ok], pend_k[~ok]

    if pend_p.size:
        logger.debug("dropped %d triplets after %d attempts each", pend_p.size, attempts)
    return entries, kept, areas


def sample_triplets(patch: Patch, cfg: SamplerConfig, pixel_id: tuple[int, int]) -> TripletSet:
    """The triplets of one pixel; empty when the patch has fewer than 3 valid entries."""
    if patch.size != cfg.patch_size:
        raise ContractError(f"patch size {patch.size} disagrees with sampler patch_size {cfg.patch_size}")
    key = rng.pixel_key(cfg.seed, np.array([pixel_id[0]]), np.array([pixel_id[1]]))
    entries, kept, areas = draw_triplets(patch.valid[None, :], key, patch.offsets, cfg)
    entries, areas = entries[0][kept[0]], areas[0][kept[0]]
    return TripletSet(
        center=(int(pixel_id[0]), int(pixel_id[1])),
        entries=entries,
        offsets=patch.offsets[entries],
        areas=areas,
    )


def pad_raster(arr: np.ndarray, margin: int, fill) -> np.ndarray:
    widths = [(margin, margin), (margin, margin)] + [(0, 0)] * (arr.ndim - 2)
    return np.pad(arr, widths, constant_values=fill)


def gather_patches(padded: np.ndarray, v0: int, v1: int, width: int, r: int) -> np.ndarray:
    """Patch entries of rows ``[v0, v1)`` from a raster padded by ``r // 2``.

    Output shape is ``(P, r*r, ...)`` with ``P = (v1 - v0) * width`` in
    row-major pixel order and entries ordered like :func:`patch_offsets`.
    """
    m = r // 2
    tail = padded.shape[2:]
    columns = []
    for dv in range(-m, m + 1):
        for du in range(-m, m + 1):
            window = padded[v0 + m + dv : v1 + m + dv, m + du : m + du + width]
            columns.append(window.reshape(-1, *tail))
    return np.stack(columns, axis=1)


def block_keys(seed: int, v0: int, v1: int, width: int) -> np.ndarray:
    v, u = np.mgrid[v0:v1, 0:width]
    return rng.pixel_key(seed, u.ravel(), v.ravel())
