"""Comparator normal estimators: Sobel tangents, least-squares plane fit, virtual normals."""

from __future__ import annotations

import logging

import numpy as np

from . import rng, sampling
from .backproject import view_align_many
from .core_types import NormalMap, PointMap
from .errors import ContractError, NumericalError
from .parallel import map_row_blocks

logger = logging.getLogger(__name__)

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()
RANK_TOL = 1e-12


def sobel_normal(pm: PointMap) -> NormalMap:
    """Cross product of the Sobel tangents of the point map.

    A pixel is valid only when its whole 3x3 support is inside the image and valid.
    """
    h, w = pm.shape
    if h < 3 or w < 3:
        raise ContractError(f"sobel needs at least a 3x3 image, got {w}x{h}")
    pts = np.where(pm.valid[..., None], pm.points, 0.0)
    tx = np.zeros((h - 2, w - 2, 3))
    ty = np.zeros((h - 2, w - 2, 3))
    support = np.ones((h - 2, w - 2), dtype=bool)
    for i in range(3):
        for j in range(3):
            window = pts[i : h - 2 + i, j : w - 2 + j]
            tx += SOBEL_X[i, j] * window
            ty += SOBEL_Y[i, j] * window
            support &= pm.valid[i : h - 2 + i, j : w - 2 + j]
    cross = np.cross(tx, ty)
    norm = np.linalg.norm(cross, axis=-1)
    ok = support & (norm > RANK_TOL)
    unit = cross / np.where(ok, norm, 1.0)[..., None]
    aligned, _ = view_align_many(unit, pm.points[1:-1, 1:-1])

    normals = np.zeros((h, w, 3))
    valid = np.zeros((h, w), dtype=bool)
    normals[1:-1, 1:-1] = np.where(ok[..., None], aligned, 0.0)
    valid[1:-1, 1:-1] = ok
    return NormalMap(normals, valid)


def lsq_normal(pm: PointMap, r: int, threads: int = 1) -> NormalMap:
    """Least-squares plane through the valid ``r x r`` neighbours.

    The normal is the covariance eigenvector of the smallest eigenvalue;
    neighbourhoods whose two smallest eigenvalues coincide are rank deficient
    and left invalid.
    """
    if r < 3 or r % 2 != 1:
        raise ContractError(f"patch size must be odd and >= 3, got {r}")
    m = r // 2
    ci = r * r // 2
    padded = sampling.pad_raster(np.where(pm.valid[..., None], pm.points, 0.0), m, 0.0)
    padded_valid = sampling.pad_raster(pm.valid, m, False)

    def block(v0: int, v1: int) -> tuple[np.ndarray, np.ndarray]:
        pts = sampling.gather_patches(padded, v0, v1, pm.width, r)
        pv = sampling.gather_patches(padded_valid, v0, v1, pm.width, r)
        count = pv.sum(axis=1)
        weight = pv.astype(np.float64)
        centroid = np.einsum("pn,pni->pi", weight, pts) / np.maximum(count, 1)[:, None]
        diff = (pts - centroid[:, None]) * weight[..., None]
        cov = np.einsum("pni,pnj->pij", diff, diff) / np.maximum(count, 1)[:, None, None]
        evals, evecs = np.linalg.eigh(cov)
        normal = evecs[:, :, 0]
        full_rank = (evals[:, 1] - evals[:, 0]) > RANK_TOL * np.maximum(1.0, evals[:, 2])
        ok = pv[:, ci] & (count >= 3) & full_rank
        aligned, _ = view_align_many(normal, pts[:, ci])
        return np.where(ok[:, None], aligned, 0.0), ok

    parts = map_row_blocks(block, pm.height, threads)
    normals = np.concatenate([p[0] for p in parts]).reshape(pm.height, pm.width, 3)
    valid = np.concatenate([p[1] for p in parts]).reshape(pm.shape)
    return NormalMap(normals, valid)


def _plane_normals(tri: np.ndarray) -> np.ndarray:
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norm = np.linalg.norm(cross, axis=-1, keepdims=True)
    return cross / np.maximum(norm, RANK_TOL)


def virtual_normal_loss(
    pm_pred: PointMap,
    pm_gt: PointMap,
    num_triplets: int = 100,
    seed: int = 0,
    min_dist: float = 0.1,
    min_angle_deg: float = 5.0,
) -> float:
    """Mean ``||n_pred - n_gt||`` over globally sampled, admissible point triplets.

    A triplet is admissible when its ground-truth points are pairwise at least
    ``min_dist`` apart and every triangle angle exceeds ``min_angle_deg``. Up
    to ``10 * num_triplets`` draws are made; the first admissible ones win.
    """
    if pm_pred.shape != pm_gt.shape:
        raise ContractError(f"point maps disagree: {pm_pred.shape} vs {pm_gt.shape}")
    flat = np.flatnonzero((pm_pred.valid & pm_gt.valid).ravel())
    if flat.size < 3:
        raise NumericalError(f"virtual normals need at least 3 jointly valid pixels, got {flat.size}")
    key = rng.splitmix64(np.uint64(seed))
    counter = np.arange(10 * num_triplets, dtype=np.uint64) * np.uint64(3)
    picks = flat[rng.distinct_triple(key, counter, flat.size)]
    gt = pm_gt.points.reshape(-1, 3)[picks]
    pred = pm_pred.points.reshape(-1, 3)[picks]

    ok = np.ones(len(picks), dtype=bool)
    cos_max = np.cos(np.radians(min_angle_deg))
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        e1 = gt[:, b] - gt[:, a]
        e2 = gt[:, c] - gt[:, a]
        n1 = np.linalg.norm(e1, axis=-1)
        n2 = np.linalg.norm(e2, axis=-1)
        ok &= n1 >= min_dist
        cos = np.einsum("pi,pi->p", e1, e2) / np.maximum(n1 * n2, RANK_TOL)
        ok &= (cos < cos_max) & (n1 > 0) & (n2 > 0)
    chosen = np.flatnonzero(ok)[:num_triplets]
    if chosen.size == 0:
        raise NumericalError("no admissible virtual-normal triplet found")
    if chosen.size < num_triplets:
        logger.warning("found %d of %d admissible triplets in %d draws", chosen.size, num_triplets, len(picks))
    diff = _plane_normals(pred[chosen]) - _plane_normals(gt[chosen])
    return float(np.mean(np.linalg.norm(diff, axis=-1)))
