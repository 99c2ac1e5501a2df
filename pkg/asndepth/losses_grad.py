"""Multi-scale depth loss, cosine normal loss and their analytic gradient.

The gradient runs the chain rule by hand through the adaptive surface normal
operator: loss -> final normalisation -> weighted mean -> candidate
normalisation -> cross product -> back-projected points -> depth. Triplet
indices, area weights and guidance confidences do not depend on depth and
are constants. Orientation flips are piecewise constant; pixels close to a
flip, or that needed the zero-weight fallback, are flagged and get zero
gradient, as does every depth pixel feeding them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import sampling
from .asn import AsnBlock, asn_blocks
from .backproject import backproject
from .config import AsnConfig, LossConfig
from .core_types import DepthMap, GuidanceFeatureMap, Intrinsics, NormalMap
from .errors import ContractError, NumericalError

logger = logging.getLogger(__name__)

RELATIVE_FLOOR = 1e-8


def downsample_valid(depth: DepthMap) -> DepthMap:
    """Valid-aware 2x2 block average; odd trailing rows/columns are cropped."""
    h, w = depth.height // 2, depth.width // 2
    if h == 0 or w == 0:
        raise ContractError(f"cannot downsample a {depth.width}x{depth.height} depth map")
    vals = np.where(depth.valid, depth.values, 0.0)[: 2 * h, : 2 * w].reshape(h, 2, w, 2)
    mask = depth.valid[: 2 * h, : 2 * w].reshape(h, 2, w, 2)
    count = mask.sum(axis=(1, 3))
    total = vals.sum(axis=(1, 3))
    valid = count > 0
    return DepthMap(np.where(valid, total / np.maximum(count, 1), 0.0), valid)


def depth_pyramid(depth: DepthMap, levels: int) -> list[DepthMap]:
    """``levels`` maps ordered coarsest to finest; the last one is ``depth`` itself."""
    pyramid = [depth]
    for _ in range(levels - 1):
        pyramid.append(downsample_valid(pyramid[-1]))
    return pyramid[::-1]


def _check_preds(preds: Sequence[DepthMap], gt: DepthMap, cfg: LossConfig) -> list[DepthMap]:
    if len(preds) != cfg.scales:
        raise ContractError(f"expected {cfg.scales} scales of predictions, got {len(preds)}")
    gts = depth_pyramid(gt, cfg.scales)
    for i, (p, g) in enumerate(zip(preds, gts)):
        if p.shape != g.shape:
            raise ContractError(f"prediction {i} is {p.shape}, expected {g.shape}")
    return gts


def _l1_levels(preds: Sequence[DepthMap], gts: Sequence[DepthMap], cfg: LossConfig):
    """``(index, weight, joint mask, residual)`` for every level with jointly valid pixels."""
    out = []
    for i, (p, g) in enumerate(zip(preds, gts)):
        joint = p.valid & g.valid
        if not joint.any():
            logger.warning("scale %d has no jointly valid pixels; skipped", i)
            continue
        level = len(preds) - 1 - i
        out.append((i, cfg.scale_weight(level), joint, p.values - g.values))
    if not out:
        raise NumericalError("no jointly valid depth pixels at any scale")
    return out


def depth_loss(preds: Sequence[DepthMap], gt: DepthMap, cfg: LossConfig) -> float:
    """Weighted sum over scales of the mean absolute depth error.

    ``preds`` is ordered coarsest to finest; the ground truth of each scale is
    the valid-aware average pyramid of ``gt``.
    """
    gts = _check_preds(preds, gt, cfg)
    total = 0.0
    for _, weight, joint, residual in _l1_levels(preds, gts, cfg):
        total += weight * float(np.mean(np.abs(residual[joint])))
    return total


def normal_loss(n_pred: NormalMap, n_gt: NormalMap) -> float:
    """Mean ``1 - cos`` over jointly valid pixels."""
    if n_pred.shape != n_gt.shape:
        raise ContractError(f"normal maps disagree: {n_pred.shape} vs {n_gt.shape}")
    joint = n_pred.valid & n_gt.valid
    if not joint.any():
        raise NumericalError("no jointly valid normals")
    dots = np.einsum("pi,pi->p", n_pred.normals[joint], n_gt.normals[joint])
    return float(np.mean(1.0 - dots))


def _predicted_normals(blocks: Sequence[AsnBlock], shape: tuple[int, int]) -> NormalMap:
    normals = np.concatenate([b.normals for b in blocks]).reshape(*shape, 3)
    valid = np.concatenate([b.valid for b in blocks]).reshape(shape)
    return NormalMap(normals, valid)


def total_loss(
    preds: Sequence[DepthMap],
    gt_depth: DepthMap,
    f: GuidanceFeatureMap,
    n_gt: NormalMap,
    intr: Intrinsics,
    asn_cfg: AsnConfig,
    loss_cfg: LossConfig,
    threads: int = 1,
) -> float:
    """``depth_loss + alpha * normal_loss``, normals from the finest prediction."""
    l_d = depth_loss(preds, gt_depth, loss_cfg)
    if loss_cfg.alpha == 0:
        return l_d
    pm = backproject(preds[-1], intr)
    n_pred = _predicted_normals(asn_blocks(pm, f, asn_cfg, threads), pm.shape)
    return l_d + loss_cfg.alpha * normal_loss(n_pred, n_gt)


@dataclass(frozen=True)
class LossGradient:
    """Gradient of :func:`total_loss` with respect to the finest depth.

    ``grad`` is ``depth_part + normal_part`` with flagged pixels zeroed;
    ``coarse`` holds the depth-term gradient of each coarser prediction
    (same order as ``preds[:-1]``).
    """

    value: float
    grad: np.ndarray
    depth_part: np.ndarray
    normal_part: np.ndarray
    coarse: list[np.ndarray]
    flagged: np.ndarray

    @property
    def n_flagged(self) -> int:
        return int(self.flagged.sum())


def _block_backward(
    block: AsnBlock,
    joint: np.ndarray,
    gt_normals: np.ndarray,
    scale: float,
    offsets: np.ndarray,
    rays: np.ndarray,
    width: int,
    height: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Depth-gradient contributions of one block's normal-loss terms.

    Returns ``(flat pixel index, value)`` pairs and the per-pixel term flags.
    """
    n_pix = block.normals.shape[0]
    term = joint[block.v0 * width : block.v1 * width]
    flagged = term & (block.near_flip | block.fallback)
    active = term & ~flagged

    d_n = np.where(active[:, None], -scale * gt_normals, 0.0)
    norm_s = np.where(active, block.combined_norm, 1.0)
    shat = block.combined / norm_s[:, None]
    d_s = block.sign[:, None] * (d_n - shat * np.einsum("pi,pi->p", shat, d_n)[:, None]) / norm_s[:, None]

    weight_sum = np.where(block.weight_sum > 0, block.weight_sum, 1.0)
    d_a = (block.weights / weight_sum[:, None])[..., None] * d_s[:, None, :]
    cnorm = np.where(block.live, block.cross_norm, 1.0)
    unit = block.cross / cnorm[..., None]
    d_m = block.cand_sign[..., None] * d_a
    d_c = (d_m - unit * np.einsum("pki,pki->pk", unit, d_m)[..., None]) / cnorm[..., None]
    d_c = np.where((block.live & active[:, None])[..., None], d_c, 0.0)

    a, b, c = block.tri[:, :, 0], block.tri[:, :, 1], block.tri[:, :, 2]
    d_b = np.cross(c - a, d_c)
    d_cc = np.cross(d_c, b - a)
    d_p = np.stack([-(d_b + d_cc), d_b, d_cc], axis=2)  # (P, K, 3, 3)

    v, u = np.divmod(np.arange(block.v0 * width, block.v1 * width), width)
    member = offsets[block.entries]  # (P, K, 3, 2)
    mu = u[:, None, None] + member[..., 0]
    mv = v[:, None, None] + member[..., 1]
    used = (block.live & active[:, None])[..., None] & np.ones(3, dtype=bool)
    # sampled members are valid pixels, hence inside the image
    mu, mv = np.clip(mu, 0, width - 1), np.clip(mv, 0, height - 1)
    d_depth = np.einsum("pkti,pkti->pkt", rays[mv, mu], d_p)
    flat = (mv * width + mu)[used]
    return flat, d_depth[used], flagged.reshape(n_pix)


def total_loss_grad(
    preds: Sequence[DepthMap],
    gt_depth: DepthMap,
    f: GuidanceFeatureMap,
    n_gt: NormalMap,
    intr: Intrinsics,
    asn_cfg: AsnConfig,
    loss_cfg: LossConfig,
    threads: int = 1,
    kink_tol: float = 0.0,
) -> LossGradient:
    """Analytic gradient of :func:`total_loss` w.r.t. ``preds[-1]``.

    The L1 subgradient is ``sign`` with ``sign(0) = 0``. Pixels with
    ``0 < |D - G| <= kink_tol`` sit next to the L1 kink and are flagged.
    """
    gts = _check_preds(preds, gt_depth, loss_cfg)
    finest = preds[-1]
    h, w = finest.shape
    coarse = [np.zeros(p.shape) for p in preds[:-1]]
    depth_part = np.zeros((h, w))
    flagged = np.zeros((h, w), dtype=bool)
    value = 0.0
    for i, weight, joint, residual in _l1_levels(preds, gts, loss_cfg):
        n = int(joint.sum())
        value += weight * float(np.mean(np.abs(residual[joint])))
        g = np.where(joint, weight * np.sign(residual) / n, 0.0)
        if i == len(preds) - 1:
            depth_part = g
            mag = np.abs(residual)
            flagged |= joint & (mag > 0) & (mag <= kink_tol)
        else:
            coarse[i] = g

    normal_part = np.zeros((h, w))
    if loss_cfg.alpha > 0:
        pm = backproject(finest, intr)
        blocks = asn_blocks(pm, f, asn_cfg, threads)
        n_pred = _predicted_normals(blocks, pm.shape)
        value += loss_cfg.alpha * normal_loss(n_pred, n_gt)
        joint = (n_pred.valid & n_gt.valid).ravel()
        scale = loss_cfg.alpha / int(joint.sum())
        offsets = sampling.patch_offsets(asn_cfg.sampler.patch_size)
        rays = intr.rays()
        gt_flat = n_gt.normals.reshape(-1, 3)
        term_flags = np.zeros(h * w, dtype=bool)
        acc = normal_part.ravel()
        for block in blocks:
            lo, hi = block.v0 * w, block.v1 * w
            idx, vals, bflag = _block_backward(block, joint, gt_flat[lo:hi], scale, offsets, rays, w, h)
            np.add.at(acc, idx, vals)
            term_flags[lo:hi] = bflag
        normal_part = acc.reshape(h, w)
        if term_flags.any():
            flagged |= _dilate(term_flags.reshape(h, w), asn_cfg.sampler.radius)

    grad = np.where(flagged, 0.0, depth_part + normal_part)
    if flagged.any():
        logger.info("%d depth pixels flagged as non-differentiable", int(flagged.sum()))
    return LossGradient(
        value=value, grad=grad, depth_part=depth_part, normal_part=normal_part, coarse=coarse, flagged=flagged
    )


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    padded = sampling.pad_raster(mask, radius, False)
    h, w = mask.shape
    out = np.zeros_like(mask)
    for dv in range(2 * radius + 1):
        for du in range(2 * radius + 1):
            out |= padded[dv : dv + h, du : du + w]
    return out


def numeric_grad(
    fn: Callable[[DepthMap], float], depth: DepthMap, h: float = 1e-5, mask: np.ndarray | None = None
) -> np.ndarray:
    """Central differences ``(fn(D + h e_j) - fn(D - h e_j)) / 2h`` at valid pixels in ``mask``.

    Unchecked pixels are NaN.
    """
    todo = depth.valid if mask is None else depth.valid & mask
    out = np.full(depth.shape, np.nan)
    values = np.array(depth.values)
    for v, u in np.argwhere(todo):
        base = values[v, u]
        values[v, u] = base + h
        up = fn(DepthMap(values, depth.valid))
        values[v, u] = base - h
        down = fn(DepthMap(values, depth.valid))
        values[v, u] = base
        out[v, u] = (up - down) / (2 * h)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = RELATIVE_FLOOR) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


@dataclass(frozen=True)
class GradCheckReport:
    max_rel: float
    mean_rel: float
    pass_fraction: float
    n_checked: int
    n_flagged: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.pass_fraction >= 0.99


def gradcheck(
    preds: Sequence[DepthMap],
    gt_depth: DepthMap,
    f: GuidanceFeatureMap,
    n_gt: NormalMap,
    intr: Intrinsics,
    asn_cfg: AsnConfig,
    loss_cfg: LossConfig,
    h: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare :func:`total_loss_grad` with central differences on unflagged pixels."""
    analytic = total_loss_grad(preds, gt_depth, f, n_gt, intr, asn_cfg, loss_cfg, kink_tol=2 * h)
    coarse = list(preds[:-1])

    def loss_of(finest: DepthMap) -> float:
        return total_loss([*coarse, finest], gt_depth, f, n_gt, intr, asn_cfg, loss_cfg)

    numeric = numeric_grad(loss_of, preds[-1], h, mask=~analytic.flagged)
    checked = np.isfinite(numeric)
    if not checked.any():
        raise NumericalError("every pixel was flagged; nothing to check")
    rel = relative_error(analytic.grad[checked], numeric[checked])
    report = GradCheckReport(
        max_rel=float(rel.max()),
        mean_rel=float(rel.mean()),
        pass_fraction=float(np.mean(rel < tolerance)),
        n_checked=int(checked.sum()),
        n_flagged=analytic.n_flagged,
        tolerance=tolerance,
    )
    logger.debug("gradcheck: %s", report)
    return report
