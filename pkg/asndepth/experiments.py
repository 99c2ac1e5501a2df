"""Desk-scale experiments on synthetic scenes.

Every experiment returns rows for :func:`asndepth.io.write_csv` with the
columns of :data:`ROW_HEADER`. ``param``/``param_value`` name the swept
quantity of the row; noise levels are given in units of the scene radius.
"""

from __future__ import annotations

import logging
import time
from typing import Sequence

import numpy as np

from .asn import asn_normals
from .backproject import backproject
from .baselines import lsq_normal, sobel_normal, virtual_normal_loss
from .config import AsnConfig, LossConfig, SamplerConfig, SceneConfig, VirtualNormalConfig, config_hash
from .core_types import GuidanceFeatureMap, NormalMap, PointMap
from .errors import ContractError
from .losses_grad import depth_pyramid, gradcheck
from .metrics import angle_errors_deg, normal_metrics
from .synthetic import Scene, add_noise, make_scene, oracle_guidance

logger = logging.getLogger(__name__)

ROW_HEADER = ("scene", "estimator", "config_hash", "param", "param_value", "seed", "metric", "value")
METHODS = ("asn", "sobel", "lsq")
NOISE_SIGMAS = (0.002, 0.005, 0.01, 0.02)
K_LIST = (10, 20, 40, 60, 80)
PATCH_SIZES = (3, 5, 7, 9)
# Gaussian blur (px) of the patch-sweep noise
PATCH_CORRELATION = 8.0
SEEDS = (0, 1, 2)
ABLATION_MODES = {
    "both": (True, True),
    "area": (True, False),
    "gc": (False, True),
    "none": (False, False),
}


def _row(scene, estimator, cfg_hash, param, param_value, seed, metric, value) -> dict[str, object]:
    return dict(zip(ROW_HEADER, (scene, estimator, cfg_hash, param, param_value, seed, metric, value)))


def _hash(*models) -> str:
    return config_hash({type(m).__name__: m.model_dump(mode="json") for m in models})


def estimate_normals(
    pm: PointMap,
    method: str,
    cfg: AsnConfig | None = None,
    guidance: GuidanceFeatureMap | None = None,
    patch: int = 5,
    threads: int = 1,
) -> NormalMap:
    """Normals of ``pm`` by ``asn``, ``sobel`` or ``lsq``."""
    if method == "asn":
        cfg = cfg or AsnConfig()
        f = guidance if guidance is not None else GuidanceFeatureMap.constant(pm.shape)
        return asn_normals(pm, f, cfg, threads)
    if method == "sobel":
        return sobel_normal(pm)
    if method == "lsq":
        return lsq_normal(pm, patch, threads)
    raise ContractError(f"unknown method {method!r}; expected one of {METHODS}")


def mean_angle(pred: NormalMap, gt: NormalMap, mask: np.ndarray | None = None) -> float:
    return float(np.mean(angle_errors_deg(pred, gt, mask)))


def boundary_band(scene: Scene, width: int = 2) -> np.ndarray:
    """Pixels with a different segment ID within ``width`` px (Chebyshev distance)."""
    seg = scene.segments
    h, w = seg.shape
    padded = np.pad(seg, width, mode="edge")
    band = np.zeros((h, w), dtype=bool)
    for dv in range(2 * width + 1):
        for du in range(2 * width + 1):
            band |= padded[dv : dv + h, du : du + w] != seg
    return band & scene.depth.valid


def _asn_config(k: int, patch: int, use_area: bool = True, use_context: bool = True, guidance="constant") -> AsnConfig:
    return AsnConfig(
        sampler=SamplerConfig(patch_size=patch, k=k),
        use_area=use_area,
        use_context=use_context,
        guidance=guidance,
    )


def _scene(kind: str, res: int, sigma_r: float, seed: int, **extra) -> tuple[SceneConfig, Scene]:
    base = SceneConfig(kind=kind, res=res, seed=seed, **extra)
    scfg = base.model_copy(update={"sigma": sigma_r * base.radius})
    return scfg, make_scene(scfg)


def noise_experiment(
    sigmas: Sequence[float] = NOISE_SIGMAS,
    modes: Sequence[str] = ("area", "uniform"),
    seeds: Sequence[int] = SEEDS,
    res: int = 64,
    k: int = 40,
    patch: int = 5,
    threads: int = 1,
) -> list[dict[str, object]]:
    """Area weighting against uniform averaging on the standalone noisy hemisphere."""
    rows = []
    for sigma in sigmas:
        for seed in seeds:
            scfg, scene = _scene("hemisphere", res, sigma, seed, background=False)
            pm = backproject(scene.depth, scene.intr)
            for mode in modes:
                if mode not in ("area", "uniform"):
                    raise ContractError(f"unknown noise mode {mode!r}")
                cfg = _asn_config(k, patch, use_area=mode == "area")
                err = mean_angle(estimate_normals(pm, "asn", cfg, threads=threads), scene.normals_gt)
                rows.append(_row("hemisphere", f"asn-{mode}", _hash(cfg, scfg), "sigma", sigma, seed, "mean_angle_deg", err))
        logger.info("noise sigma=%g done", sigma)
    return rows


def sweep_k(
    klist: Sequence[int] = K_LIST,
    kind: str = "hemisphere",
    sigma: float = 0.01,
    seeds: Sequence[int] = SEEDS,
    res: int = 64,
    patch: int = 5,
    threads: int = 1,
) -> list[dict[str, object]]:
    rows = []
    for seed in seeds:
        scfg, scene = _scene(kind, res, sigma, seed)
        pm = backproject(scene.depth, scene.intr)
        for k in klist:
            cfg = _asn_config(k, patch)
            err = mean_angle(estimate_normals(pm, "asn", cfg, threads=threads), scene.normals_gt)
            rows.append(_row(kind, "asn", _hash(cfg, scfg), "k", k, seed, "mean_angle_deg", err))
    return rows


def sweep_patch(
    sizes: Sequence[int] = PATCH_SIZES,
    kind: str = "hemisphere",
    sigma: float = 0.01,
    seeds: Sequence[int] = SEEDS,
    res: int = 128,
    k: int = 40,
    correlation: float = PATCH_CORRELATION,
    threads: int = 1,
) -> list[dict[str, object]]:
    """Oracle-guided ASN at every patch size, all scored on one pixel set.

    The depth noise is blurred over ``correlation`` px. Pixels within
    ``max(sizes) // 2`` px of a segment change or of the image border are
    left out, so no patch of any size straddles a discontinuity.
    """
    if not sizes:
        raise ContractError("sweep_patch needs at least one patch size")
    margin = max(sizes) // 2
    rows = []
    for seed in seeds:
        scfg, scene = _scene(kind, res, sigma, seed, correlation=correlation)
        pm = backproject(scene.depth, scene.intr)
        f = oracle_guidance(scene)
        mask = scene.depth.valid & ~boundary_band(scene, margin)
        mask[:margin] = mask[-margin:] = False
        mask[:, :margin] = mask[:, -margin:] = False
        for r in sizes:
            cfg = _asn_config(k, r, guidance="oracle")
            err = mean_angle(estimate_normals(pm, "asn", cfg, f, threads=threads), scene.normals_gt, mask)
            rows.append(_row(kind, "asn", _hash(cfg, scfg), "patch", r, seed, "mean_angle_deg", err))
    return rows


def ablation(
    sigma: float = 0.005,
    seeds: Sequence[int] = SEEDS,
    modes: Sequence[str] = tuple(ABLATION_MODES),
    res: int = 64,
    k: int = 40,
    patch: int = 5,
    band_width: int = 2,
    threads: int = 1,
) -> list[dict[str, object]]:
    """Area / geometric-context switches on the noisy step scene with oracle guidance."""
    unknown = set(modes) - set(ABLATION_MODES)
    if unknown:
        raise ContractError(f"unknown ablation modes {sorted(unknown)}; expected {list(ABLATION_MODES)}")
    rows = []
    for seed in seeds:
        scfg, scene = _scene("step", res, sigma, seed)
        pm = backproject(scene.depth, scene.intr)
        f = oracle_guidance(scene)
        band = boundary_band(scene, band_width)
        for mode in modes:
            use_area, use_context = ABLATION_MODES[mode]
            cfg = _asn_config(k, patch, use_area, use_context, guidance="oracle")
            pred = estimate_normals(pm, "asn", cfg, f, threads=threads)
            h = _hash(cfg, scfg)
            rows.append(_row("step", f"asn-{mode}", h, "sigma", sigma, seed, "mean_angle_deg", mean_angle(pred, scene.normals_gt)))
            rows.append(_row("step", f"asn-{mode}", h, "sigma", sigma, seed, "band_mean_angle_deg", mean_angle(pred, scene.normals_gt, band)))
    return rows


def boundary_comparison(
    kinds: Sequence[str] = ("step", "wedge"),
    sigma: float = 0.0,
    seed: int = 0,
    res: int = 64,
    k: int = 40,
    patch: int = 5,
    band_width: int = 2,
    threads: int = 1,
) -> list[dict[str, object]]:
    """Mean angle error inside the discontinuity band: oracle ASN, constant ASN and Sobel."""
    rows = []
    for kind in kinds:
        scfg, scene = _scene(kind, res, sigma, seed)
        pm = backproject(scene.depth, scene.intr)
        band = boundary_band(scene, band_width)
        runs = {
            "asn-oracle": (_asn_config(k, patch, guidance="oracle"), oracle_guidance(scene)),
            "asn-constant": (_asn_config(k, patch), None),
        }
        for name, (cfg, f) in runs.items():
            pred = estimate_normals(pm, "asn", cfg, f, threads=threads)
            err = mean_angle(pred, scene.normals_gt, band)
            rows.append(_row(kind, name, _hash(cfg, scfg), "band", band_width, seed, "band_mean_angle_deg", err))
        err = mean_angle(sobel_normal(pm), scene.normals_gt, band)
        rows.append(_row(kind, "sobel", _hash(scfg), "band", band_width, seed, "band_mean_angle_deg", err))
    return rows


def compare_estimators(
    kinds: Sequence[str] = ("plane", "hemisphere", "step", "wedge"),
    sigma: float = 0.005,
    seed: int = 0,
    res: int = 64,
    k: int = 40,
    patch: int = 5,
    vn: VirtualNormalConfig = VirtualNormalConfig(),
    threads: int = 1,
) -> list[dict[str, object]]:
    """Every local estimator on every scene kind, plus the virtual-normal loss of the noisy depth."""
    rows = []
    for kind in kinds:
        scfg, scene = _scene(kind, res, sigma, seed)
        pm = backproject(scene.depth, scene.intr)
        clean_pm = backproject(make_scene(scfg.model_copy(update={"sigma": 0.0})).depth, scene.intr)
        asn_cfg = _asn_config(k, patch, guidance="oracle")
        preds = {
            "asn": (estimate_normals(pm, "asn", asn_cfg, oracle_guidance(scene), threads=threads), _hash(asn_cfg, scfg)),
            "sobel": (sobel_normal(pm), _hash(scfg)),
            "lsq": (lsq_normal(pm, patch, threads), _hash(scfg)),
        }
        band = boundary_band(scene) if scene.edge_col is not None else None
        for name, (pred, h) in preds.items():
            for metric, value in normal_metrics(pred, scene.normals_gt).items():
                rows.append(_row(kind, name, h, "sigma", sigma, seed, metric, value))
            if band is not None and band.any():
                err = mean_angle(pred, scene.normals_gt, band)
                rows.append(_row(kind, name, h, "sigma", sigma, seed, "band_mean_angle_deg", err))
        loss = virtual_normal_loss(pm, clean_pm, vn.num_triplets, vn.seed, vn.min_dist, vn.min_angle_deg)
        rows.append(_row(kind, "vn", _hash(vn, scfg), "sigma", sigma, seed, "vn_loss", loss))
    return rows


def gradcheck_scene(res: int, seed: int, sigma: float = 0.01, scales: int = 4):
    """Hemisphere ground truth and a noisy prediction pyramid for gradient checking."""
    scene = make_scene(SceneConfig(kind="hemisphere", res=res, seed=seed))
    noisy = add_noise(scene, sigma, seed + 1)
    preds = depth_pyramid(noisy.depth, scales)
    return scene, preds


def run_gradcheck(
    res: int = 16,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    h: float = 1e-5,
    tolerance: float = 1e-4,
    k: int = 40,
) -> list[dict[str, object]]:
    rows = []
    loss_cfg = LossConfig()
    for seed in seeds:
        scene, preds = gradcheck_scene(res, seed, scales=loss_cfg.scales)
        cfg = AsnConfig(sampler=SamplerConfig(k=k, seed=seed), guidance="oracle")
        report = gradcheck(preds, scene.depth, oracle_guidance(scene), scene.normals_gt, scene.intr, cfg, loss_cfg, h, tolerance)
        hsh = _hash(cfg, loss_cfg)
        for metric in ("max_rel", "mean_rel", "pass_fraction", "n_checked", "n_flagged"):
            rows.append(_row("hemisphere", "asn-loss", hsh, "h", h, seed, metric, getattr(report, metric)))
        logger.info("gradcheck seed=%d pass_fraction=%.4f", seed, report.pass_fraction)
    return rows


def bench(
    resolutions: Sequence[int] = (64, 128, 256, 512),
    methods: Sequence[str] = METHODS,
    klist: Sequence[int] = K_LIST,
    k_res: int = 192,
    lsq_patch: int = 9,
    repeats: int = 5,
    threads: int = 1,
) -> list[dict[str, object]]:
    """Wall time per method and resolution, per ``K``, and lsq at ``lsq_patch``.

    Every timing is the median of ``repeats`` rounds, and each round runs all
    jobs once in the same order, so slow drift hits every job alike.
    """
    if repeats < 1:
        raise ContractError(f"repeats must be >= 1, got {repeats}")
    jobs = []

    for res in resolutions:
        scfg = SceneConfig(kind="hemisphere", res=res)
        scene = make_scene(scfg)
        pm = backproject(scene.depth, scene.intr)
        for method in methods:
            cfg = AsnConfig()
            jobs.append((method, _hash(cfg, scfg), "res", res, pm,
                         lambda m=method, p=pm, c=cfg: estimate_normals(p, m, c, threads=threads)))

    scfg = SceneConfig(kind="hemisphere", res=k_res)
    scene = make_scene(scfg)
    pm = backproject(scene.depth, scene.intr)
    for k in klist:
        cfg = _asn_config(k, 5)
        jobs.append(("asn", _hash(cfg, scfg), "k", k, pm, lambda c=cfg: estimate_normals(pm, "asn", c, threads=threads)))
    jobs.append(("lsq", _hash(scfg), "patch", lsq_patch, pm, lambda: lsq_normal(pm, lsq_patch, threads)))

    times = [[] for _ in jobs]
    for _ in range(repeats):
        for slot, job in zip(times, jobs):
            start = time.perf_counter()
            job[-1]()
            slot.append(time.perf_counter() - start)

    rows = []
    for (name, hsh, param, value, pm, _), slot in zip(jobs, times):
        secs = float(np.median(slot))
        rows.append(_row("hemisphere", name, hsh, param, value, 0, "time_s", secs))
        rows.append(_row("hemisphere", name, hsh, param, value, 0, "per_pixel_s", secs / (pm.height * pm.width)))
    return rows
