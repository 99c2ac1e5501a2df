import numpy as np
import pytest

from asndepth.asn import similarity_kernel
from asndepth.backproject import backproject, view_align
from asndepth.config import SceneConfig
from asndepth.core_types import Intrinsics
from asndepth.errors import ContractError, DomainError
from asndepth.synthetic import (
    NO_SEGMENT,
    add_noise,
    gen_hemisphere,
    gen_plane,
    gen_step,
    gen_wedge,
    make_scene,
    oracle_guidance,
)


def test_plane_normals_and_membership(slanted_plane, plane_points):
    n = np.array([0.3, -0.2, 1.0])
    assert np.allclose(slanted_plane.normals_gt.normals, view_align(n / np.linalg.norm(n), (0, 0, 1)), atol=1e-12)
    assert np.abs(plane_points.points @ n - 3.0).max() < 1e-9
    assert set(np.unique(slanted_plane.segments)) == {0}


def test_tilted_plane_keeps_single_segment(intr32):
    scene = gen_plane(intr32, (0.0, 0.8, 1.0), 2.5)
    assert set(np.unique(scene.segments[scene.depth.valid])) == {0}


def test_rays_missing_plane_are_invalid(intr32):
    scene = gen_plane(intr32, (1.0, 0.0, 0.0), 0.5)
    assert not scene.depth.valid[:, : int(intr32.cx) + 1].any()
    assert scene.depth.valid[:, int(intr32.cx) + 1 :].all()
    assert (scene.segments[~scene.depth.valid] == NO_SEGMENT).all()


def test_hemisphere_front_pole(hemisphere, intr32):
    cy, cx = int(intr32.cy), int(intr32.cx)
    assert hemisphere.depth.values[cy, cx] == 2.0
    assert hemisphere.normals_gt.normals[cy, cx].tolist() == [0.0, 0.0, -1.0]


def test_hemisphere_membership(hemisphere):
    pm = backproject(hemisphere.depth, hemisphere.intr)
    sphere = hemisphere.segments == 0
    radius = np.linalg.norm(pm.points[sphere] - [0.0, 0.0, 3.0], axis=-1)
    assert np.abs(radius - 1.0).max() < 1e-9
    assert np.abs(pm.points[hemisphere.segments == 1][:, 2] - 3.0).max() < 1e-9
    assert hemisphere.normals_gt.is_camera_facing(pm)


def test_hemisphere_without_background(intr32):
    scene = gen_hemisphere(intr32, background=False)
    assert set(np.unique(scene.segments)) == {NO_SEGMENT, 0}
    assert np.array_equal(scene.depth.valid, scene.segments == 0)


def test_hemisphere_behind_camera(intr32):
    with pytest.raises(DomainError):
        gen_hemisphere(intr32, center=(0.0, 0.0, 0.5), radius=1.0)


def test_step_sides(step):
    assert (step.depth.values[:, :16] == 2.0).all()
    assert (step.depth.values[:, 16:] == 3.0).all()
    assert (step.segments[:, :16] == 0).all() and (step.segments[:, 16:] == 1).all()
    assert (step.normals_gt.normals == [0.0, 0.0, -1.0]).all()
    assert step.edge_col == 16


def test_wedge_sides_and_crease(intr32):
    scene = gen_wedge(intr32, 16)
    pm = backproject(scene.depth, intr32)
    x, z = pm.points[..., 0], pm.points[..., 2]
    x0 = 3.0 * (16 - intr32.cx) / intr32.fx
    for seg, k in ((0, 0.5), (1, -0.5)):
        on = scene.segments == seg
        assert np.abs(z[on] - (3.0 + k * (x[on] - x0))).max() < 1e-9
        want = view_align(np.array([-k, 0.0, 1.0]) / np.hypot(k, 1.0), (0, 0, 1))
        assert np.allclose(scene.normals_gt.normals[on], want, atol=1e-12)
    assert set(np.unique(scene.segments)) == {0, 1}
    assert np.allclose(scene.depth.values[:, 16], 3.0, atol=1e-12)
    assert (scene.segments[:, 16] == 0).all()


def test_noise_zero_sigma_is_identity(hemisphere):
    assert add_noise(hemisphere, 0.0, seed=5) is hemisphere


def test_noise_is_reproducible_and_leaves_truth(hemisphere):
    a = add_noise(hemisphere, 0.01, seed=4)
    b = add_noise(hemisphere, 0.01, seed=4)
    assert np.array_equal(a.depth.values, b.depth.values)
    assert a.normals_gt is hemisphere.normals_gt
    assert np.array_equal(a.segments, hemisphere.segments)


def test_noise_std_matches_sigma():
    intr = Intrinsics.for_resolution(128)
    scene = gen_plane(intr, (0.0, 0.0, 1.0), 3.0)
    noisy = add_noise(scene, 0.02, seed=0)
    std = float(np.std(noisy.depth.values - scene.depth.values))
    assert abs(std - 0.02) <= 0.05 * 0.02


def test_negative_sigma_rejected(hemisphere):
    with pytest.raises(ContractError):
        add_noise(hemisphere, -0.1, seed=0)


def test_correlated_noise_keeps_sigma_and_is_smooth():
    scene = gen_plane(Intrinsics.for_resolution(64), (0.0, 0.0, 1.0), 3.0)
    smooth = add_noise(scene, 0.01, seed=2, correlation=8.0).depth.values - scene.depth.values
    white = add_noise(scene, 0.01, seed=2).depth.values - scene.depth.values
    assert float(np.std(smooth)) == pytest.approx(0.01, rel=1e-9)
    assert np.corrcoef(smooth[:, :-1].ravel(), smooth[:, 1:].ravel())[0, 1] > 0.9
    assert abs(np.corrcoef(white[:, :-1].ravel(), white[:, 1:].ravel())[0, 1]) < 0.1


def test_scene_config_carries_noise_correlation():
    cfg = SceneConfig(kind="plane", res=32, sigma=0.01, seed=1, correlation=4.0)
    want = add_noise(gen_plane(Intrinsics.for_resolution(32), (0.3, -0.2, 1.0), 3.0), 0.01, seed=1, correlation=4.0)
    assert np.array_equal(make_scene(cfg).depth.values, want.depth.values)
    with pytest.raises(ContractError):
        add_noise(want, 0.01, seed=1, correlation=-1.0)


def test_oracle_guidance_separates_segments(step):
    f = oracle_guidance(step).features
    assert np.array_equal(f[0, 0], f[5, 10])
    assert similarity_kernel(f[0, 0], f[5, 10]) == 1.0
    assert similarity_kernel(f[0, 15], f[0, 16]) < 1e-3


def test_oracle_guidance_on_single_surface_is_uniform(slanted_plane):
    f = oracle_guidance(slanted_plane).features
    assert (f == f[0, 0]).all()


@pytest.mark.parametrize("kind", ["plane", "hemisphere", "step", "wedge"])
def test_make_scene_kinds(kind):
    scene = make_scene(SceneConfig(kind=kind, res=24))
    assert scene.kind == kind
    assert scene.depth.shape == (24, 24)
    assert scene.intr == Intrinsics.for_resolution(24)


def test_make_scene_step_geometry():
    scene = make_scene(SceneConfig(kind="step", res=16))
    assert scene.edge_col == 8
    assert scene.depth.values[0, 0] == 2.0 and scene.depth.values[0, 15] == 3.0
