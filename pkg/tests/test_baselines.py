import numpy as np
import pytest

from asndepth.asn import asn_normals
from asndepth.backproject import backproject
from asndepth.baselines import lsq_normal, sobel_normal, virtual_normal_loss
from asndepth.config import AsnConfig, SamplerConfig
from asndepth.core_types import DepthMap, GuidanceFeatureMap, Intrinsics
from asndepth.errors import ContractError, NumericalError
from asndepth.experiments import boundary_band, mean_angle
from asndepth.metrics import angle_errors_deg
from asndepth.synthetic import add_noise, gen_hemisphere, oracle_guidance


def _interior(shape, margin):
    mask = np.zeros(shape, dtype=bool)
    mask[margin:-margin, margin:-margin] = True
    return mask


def test_sobel_fronto_plane(fronto_plane):
    pm = backproject(fronto_plane.depth, fronto_plane.intr)
    n = sobel_normal(pm)
    assert n.valid[1:-1, 1:-1].all()
    assert not n.valid[0].any() and not n.valid[:, -1].any()
    assert np.abs(n.normals[n.valid] - [0.0, 0.0, -1.0]).max() < 1e-12


def test_sobel_slanted_plane(slanted_plane, plane_points):
    n = sobel_normal(plane_points)
    err = np.radians(angle_errors_deg(n, slanted_plane.normals_gt)).max()
    assert err < 1e-6


def test_sobel_support_must_be_valid(intr32):
    valid = np.ones(intr32.shape, dtype=bool)
    valid[10, 10] = False
    pm = backproject(DepthMap(np.full(intr32.shape, 2.0), valid), intr32)
    n = sobel_normal(pm)
    assert not n.valid[9:12, 9:12].any()
    assert n.valid[12, 12]


def test_sobel_rejects_tiny_images():
    pm = backproject(DepthMap.dense(np.ones((2, 2))), Intrinsics.for_resolution(2))
    with pytest.raises(ContractError):
        sobel_normal(pm)


def test_sobel_worse_than_oracle_asn_at_step(step):
    pm = backproject(step.depth, step.intr)
    band = boundary_band(step, 2)
    cfg = AsnConfig(sampler=SamplerConfig(k=80), guidance="oracle")
    asn = asn_normals(pm, oracle_guidance(step), cfg)
    sobel = sobel_normal(pm)
    assert mean_angle(sobel, step.normals_gt, band) > mean_angle(asn, step.normals_gt, band)


@pytest.mark.parametrize("r", [3, 5, 7])
def test_lsq_exact_plane(r, slanted_plane, plane_points):
    n = lsq_normal(plane_points, r)
    assert n.valid.all()
    assert np.radians(angle_errors_deg(n, slanted_plane.normals_gt)).max() < 1e-9


def test_lsq_hemisphere_bias_is_small():
    scene = gen_hemisphere(Intrinsics.for_resolution(128))
    n = lsq_normal(backproject(scene.depth, scene.intr), 5)
    interior = (scene.segments == 0) & ~boundary_band(scene, 2)
    assert mean_angle(n, scene.normals_gt, interior) < 1.0


def test_lsq_collinear_neighbourhood_is_invalid(intr32):
    valid = np.zeros(intr32.shape, dtype=bool)
    valid[8, :] = True
    pm = backproject(DepthMap(np.where(valid, 2.0, 0.0), valid), intr32)
    assert not lsq_normal(pm, 5).valid.any()


def test_lsq_patch_size_contract(plane_points):
    with pytest.raises(ContractError):
        lsq_normal(plane_points, 4)


def test_baselines_are_thread_independent(hemisphere):
    noisy = add_noise(hemisphere, 0.01, seed=1)
    pm = backproject(noisy.depth, noisy.intr)
    assert lsq_normal(pm, 5, threads=1).normals.tobytes() == lsq_normal(pm, 5, threads=3).normals.tobytes()
    assert sobel_normal(pm).normals.tobytes() == sobel_normal(pm).normals.tobytes()


def test_estimators_agree_on_plane_interior(plane_points):
    inner = _interior(plane_points.shape, 2)
    asn = asn_normals(plane_points, GuidanceFeatureMap.constant(plane_points.shape), AsnConfig())
    for other in (sobel_normal(plane_points), lsq_normal(plane_points, 5)):
        assert np.radians(angle_errors_deg(asn, other, inner)).max() < 1e-6


def test_virtual_normal_identity(hemisphere):
    pm = backproject(hemisphere.depth, hemisphere.intr)
    assert virtual_normal_loss(pm, pm) == 0.0


def test_virtual_normal_fronto_plane_scale_invariant(fronto_plane):
    pm = backproject(fronto_plane.depth, fronto_plane.intr)
    scaled = backproject(fronto_plane.depth.scaled(2.0), fronto_plane.intr)
    assert virtual_normal_loss(scaled, pm) == pytest.approx(0.0, abs=1e-12)


def test_virtual_normal_snapshot(hemisphere, golden, ripple):
    pred = backproject(ripple(hemisphere.depth), hemisphere.intr)
    loss = virtual_normal_loss(pred, backproject(hemisphere.depth, hemisphere.intr), num_triplets=100, seed=7)
    assert loss == pytest.approx(float(golden("virtual_normal_loss_hemisphere32_ripple.txt")), rel=1e-9)


def test_virtual_normal_errors(fronto_plane):
    pm = backproject(fronto_plane.depth, fronto_plane.intr)
    with pytest.raises(NumericalError):
        virtual_normal_loss(pm, pm, min_dist=100.0)
    tiny = backproject(DepthMap(np.ones((4, 4)), np.eye(4, dtype=bool) & (np.arange(4) < 2)), Intrinsics.for_resolution(4))
    with pytest.raises(NumericalError):
        virtual_normal_loss(tiny, tiny)
    other = backproject(DepthMap.dense(np.ones((4, 4))), Intrinsics.for_resolution(4))
    with pytest.raises(ContractError):
        virtual_normal_loss(pm, other)
