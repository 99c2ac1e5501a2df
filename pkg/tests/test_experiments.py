import math

import numpy as np
import pytest

from asndepth import experiments
from asndepth.backproject import backproject
from asndepth.errors import ContractError


def test_boundary_band_on_step(step):
    band = experiments.boundary_band(step, 2)
    cols = np.flatnonzero(band.any(axis=0))
    assert cols.tolist() == [14, 15, 16, 17]
    assert band[:, 14:18].all()


def test_boundary_band_empty_on_plane(slanted_plane):
    assert not experiments.boundary_band(slanted_plane).any()


def test_estimate_normals_rejects_unknown_method(plane_points):
    with pytest.raises(ContractError):
        experiments.estimate_normals(plane_points, "svd")


def _check_rows(rows):
    assert rows
    for row in rows:
        assert tuple(row) == experiments.ROW_HEADER
        assert len(row["config_hash"]) == 12
        assert math.isfinite(float(row["value"]))


def test_sweep_k_rows():
    rows = experiments.sweep_k(klist=(10, 20), seeds=(0,), res=24)
    _check_rows(rows)
    assert [r["param_value"] for r in rows] == [10, 20]
    assert rows[0]["config_hash"] != rows[1]["config_hash"]
    assert {r["param"] for r in rows} == {"k"}


def test_sweep_patch_rows():
    rows = experiments.sweep_patch(sizes=(3, 7), seeds=(1,), res=24)
    _check_rows(rows)
    assert [(r["param"], r["param_value"], r["seed"]) for r in rows] == [("patch", 3, 1), ("patch", 7, 1)]


def test_sweep_patch_error_is_flat_under_smooth_noise():
    rows = experiments.sweep_patch(kind="plane", seeds=(0,), res=64)
    errors = {r["param_value"]: r["value"] for r in rows}
    assert sorted(errors) == list(experiments.PATCH_SIZES)
    lo, hi = min(errors.values()), max(errors.values())
    assert 0 < lo and hi - lo <= 0.15 * lo
    with pytest.raises(ContractError):
        experiments.sweep_patch(sizes=(), seeds=(0,), res=24)


def test_noise_experiment_rows():
    rows = experiments.noise_experiment(sigmas=(0.01,), seeds=(0,), res=24)
    _check_rows(rows)
    assert [r["estimator"] for r in rows] == ["asn-area", "asn-uniform"]
    with pytest.raises(ContractError):
        experiments.noise_experiment(sigmas=(0.01,), modes=("median",), seeds=(0,), res=24)


def test_ablation_rows_and_modes():
    rows = experiments.ablation(seeds=(0,), modes=("both", "gc"), res=24)
    _check_rows(rows)
    assert {(r["estimator"], r["metric"]) for r in rows} == {
        ("asn-both", "mean_angle_deg"),
        ("asn-both", "band_mean_angle_deg"),
        ("asn-gc", "mean_angle_deg"),
        ("asn-gc", "band_mean_angle_deg"),
    }
    with pytest.raises(ContractError):
        experiments.ablation(seeds=(0,), modes=("both", "neither"), res=24)


def test_boundary_comparison_favours_oracle_guidance():
    rows = experiments.boundary_comparison(kinds=("step",), res=32)
    err = {r["estimator"]: r["value"] for r in rows}
    assert set(err) == {"asn-oracle", "asn-constant", "sobel"}
    assert err["asn-oracle"] < err["sobel"]
    assert err["asn-oracle"] < err["asn-constant"]


def test_compare_estimators_rows():
    rows = experiments.compare_estimators(kinds=("step",), res=24)
    _check_rows(rows)
    assert {r["estimator"] for r in rows} == {"asn", "sobel", "lsq", "vn"}
    vn = [r for r in rows if r["estimator"] == "vn"]
    assert len(vn) == 1 and vn[0]["metric"] == "vn_loss" and vn[0]["value"] > 0
    assert any(r["metric"] == "band_mean_angle_deg" for r in rows)


def test_gradcheck_scene_shapes():
    scene, preds = experiments.gradcheck_scene(16, seed=0)
    assert [p.shape for p in preds] == [(2, 2), (4, 4), (8, 8), (16, 16)]
    assert not np.array_equal(preds[-1].values, scene.depth.values)


def test_run_gradcheck_rows():
    rows = experiments.run_gradcheck(seeds=(0,))
    _check_rows(rows)
    got = {r["metric"]: r["value"] for r in rows}
    assert set(got) == {"max_rel", "mean_rel", "pass_fraction", "n_checked", "n_flagged"}
    assert got["pass_fraction"] >= 0.99


def test_bench_rows():
    rows = experiments.bench(resolutions=(16,), methods=("sobel",), klist=(10,), k_res=16, lsq_patch=3)
    _check_rows(rows)
    assert [(r["estimator"], r["param"], r["metric"]) for r in rows] == [
        ("sobel", "res", "time_s"),
        ("sobel", "res", "per_pixel_s"),
        ("asn", "k", "time_s"),
        ("asn", "k", "per_pixel_s"),
        ("lsq", "patch", "time_s"),
        ("lsq", "patch", "per_pixel_s"),
    ]
    assert all(r["value"] >= 0 for r in rows)
    with pytest.raises(ContractError):
        experiments.bench(resolutions=(), klist=(10,), k_res=16, repeats=0)


def test_mean_angle_matches_estimate(hemisphere):
    pm = backproject(hemisphere.depth, hemisphere.intr)
    pred = experiments.estimate_normals(pm, "lsq", patch=3)
    assert experiments.mean_angle(pred, hemisphere.normals_gt) > 0
