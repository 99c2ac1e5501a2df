import numpy as np
import pytest

from asndepth.asn import asn_normals
from asndepth.backproject import backproject
from asndepth.config import AsnConfig, LossConfig
from asndepth.core_types import DepthMap, GuidanceFeatureMap, Intrinsics, NormalMap
from asndepth.errors import ContractError, NumericalError
from asndepth.experiments import gradcheck_scene
from asndepth.losses_grad import (
    depth_loss,
    depth_pyramid,
    downsample_valid,
    gradcheck,
    normal_loss,
    numeric_grad,
    total_loss,
    total_loss_grad,
)
from asndepth.synthetic import gen_hemisphere, oracle_guidance


def _const(shape, value):
    return DepthMap.dense(np.full(shape, value))


def test_downsample_is_valid_aware():
    values = np.array([[1.0, 3.0, 5.0, 5.0], [2.0, 0.0, 5.0, 5.0]])
    valid = values > 0
    down = downsample_valid(DepthMap(values, valid))
    assert down.values.tolist() == [[2.0, 5.0]]
    empty = downsample_valid(DepthMap(np.zeros((2, 2)), np.zeros((2, 2), dtype=bool)))
    assert not empty.valid.any()


def test_pyramid_is_coarse_to_fine():
    d = _const((16, 16), 2.0)
    shapes = [p.shape for p in depth_pyramid(d, 4)]
    assert shapes == [(2, 2), (4, 4), (8, 8), (16, 16)]


def test_depth_loss_zero_on_gt_pyramid():
    gt = DepthMap.dense(np.linspace(1.0, 2.0, 256).reshape(16, 16))
    assert depth_loss(depth_pyramid(gt, 4), gt, LossConfig()) == 0.0


def test_depth_loss_single_scale_constant_offset():
    gt = _const((8, 8), 1.0)
    loss = depth_loss([_const((8, 8), 1.1)], gt, LossConfig(scales=1))
    assert loss == pytest.approx(0.1, abs=1e-12)


def test_depth_loss_two_scales_legacy_exponent():
    gt = _const((8, 8), 1.0)
    preds = [_const((4, 4), 1.2), _const((8, 8), 1.1)]
    assert depth_loss(preds, gt, LossConfig(scales=2)) == pytest.approx(0.1 + 0.2 / 0.8, abs=1e-12)
    modern = LossConfig(scales=2, legacy_exponent=False)
    assert depth_loss(preds, gt, modern) == pytest.approx(0.1 + 0.2 * 0.8, abs=1e-12)


def test_depth_loss_contracts():
    gt = _const((8, 8), 1.0)
    with pytest.raises(ContractError):
        depth_loss([_const((8, 8), 1.0)], gt, LossConfig(scales=2))
    with pytest.raises(ContractError):
        depth_loss([_const((4, 4), 1.0), _const((4, 4), 1.0)], gt, LossConfig(scales=2))
    dead = DepthMap(np.zeros((8, 8)), np.zeros((8, 8), dtype=bool))
    with pytest.raises(NumericalError):
        depth_loss([dead], gt, LossConfig(scales=1))


@pytest.mark.parametrize("pred, want", [((0, 0, -1), 0.0), ((1, 0, 0), 1.0), ((0, 0, 1), 2.0)])
def test_normal_loss_examples(pred, want):
    gt = NormalMap.uniform((0, 0, -1), (4, 4))
    assert normal_loss(NormalMap.uniform(pred, (4, 4)), gt) == want


def test_normal_loss_needs_joint_pixels():
    a = NormalMap(np.zeros((2, 2, 3)), np.zeros((2, 2), dtype=bool))
    with pytest.raises(NumericalError):
        normal_loss(a, NormalMap.uniform((0, 0, -1), (2, 2)))


def _hemisphere_inputs(hemisphere):
    pm = backproject(hemisphere.depth, hemisphere.intr)
    f = GuidanceFeatureMap.constant(pm.shape)
    cfg = AsnConfig()
    return f, cfg, asn_normals(pm, f, cfg)


def test_total_loss_zero_at_ground_truth(hemisphere):
    f, cfg, n_gt = _hemisphere_inputs(hemisphere)
    preds = depth_pyramid(hemisphere.depth, 4)
    loss = total_loss(preds, hemisphere.depth, f, n_gt, hemisphere.intr, cfg, LossConfig())
    assert loss == pytest.approx(0.0, abs=1e-12)


def test_total_loss_alpha_zero_is_depth_loss(hemisphere):
    f, cfg, _ = _hemisphere_inputs(hemisphere)
    preds = depth_pyramid(DepthMap.dense(hemisphere.depth.values * 1.01), 4)
    lcfg = LossConfig(alpha=0.0)
    got = total_loss(preds, hemisphere.depth, f, hemisphere.normals_gt, hemisphere.intr, cfg, lcfg)
    assert got == depth_loss(preds, hemisphere.depth, lcfg)


def test_total_loss_snapshot(golden, ripple):
    scene = gen_hemisphere(Intrinsics.for_resolution(16))
    preds = depth_pyramid(ripple(scene.depth), 4)
    cfg = AsnConfig(guidance="oracle")
    loss = total_loss(preds, scene.depth, oracle_guidance(scene), scene.normals_gt, scene.intr, cfg, LossConfig())
    assert loss == pytest.approx(float(golden("total_loss_hemisphere16_ripple.txt")), rel=1e-9)


def test_gradient_alpha_zero_is_l1_subgradient():
    gt = DepthMap.dense(np.full((4, 4), 2.0))
    values = np.full((4, 4), 2.0)
    values[0, :2] = 2.5
    values[3, 3] = 1.5
    pred = DepthMap.dense(values)
    lcfg = LossConfig(alpha=0.0, scales=1)
    intr = Intrinsics.for_resolution(4)
    out = total_loss_grad([pred], gt, GuidanceFeatureMap.constant((4, 4)), NormalMap.uniform((0, 0, -1), (4, 4)), intr, AsnConfig(), lcfg)
    want = np.sign(values - 2.0) / 16
    assert np.array_equal(out.grad, want)
    assert out.value == pytest.approx(1.5 / 16)
    assert not out.normal_part.any()


def test_coarse_gradients_reported_separately():
    gt = _const((8, 8), 1.0)
    preds = [_const((4, 4), 1.2), _const((8, 8), 0.9)]
    lcfg = LossConfig(scales=2, alpha=0.0)
    out = total_loss_grad(
        preds, gt, GuidanceFeatureMap.constant((8, 8)), NormalMap.uniform((0, 0, -1), (8, 8)),
        Intrinsics.for_resolution(8), AsnConfig(), lcfg,
    )
    assert np.allclose(out.coarse[0], 1.25 / 16)
    assert np.allclose(out.grad, -1.0 / 64)


def test_kink_pixels_are_flagged():
    gt = _const((4, 4), 2.0)
    values = np.full((4, 4), 2.5)
    values[1, 1] = 2.0 + 1e-6
    out = total_loss_grad(
        [DepthMap.dense(values)], gt, GuidanceFeatureMap.constant((4, 4)), NormalMap.uniform((0, 0, -1), (4, 4)),
        Intrinsics.for_resolution(4), AsnConfig(), LossConfig(alpha=0.0, scales=1), kink_tol=1e-5,
    )
    assert out.flagged[1, 1] and out.n_flagged == 1
    assert out.grad[1, 1] == 0.0


def test_flat_scene_is_stationary_for_normal_term(fronto_plane):
    pm = backproject(fronto_plane.depth, fronto_plane.intr)
    f = GuidanceFeatureMap.constant(pm.shape)
    cfg = AsnConfig()
    n_gt = asn_normals(pm, f, cfg)
    out = total_loss_grad([fronto_plane.depth], fronto_plane.depth, f, n_gt, fronto_plane.intr, cfg, LossConfig(scales=1))
    assert np.abs(out.normal_part).max() < 1e-9
    assert out.value == pytest.approx(0.0, abs=1e-12)


def test_gradient_is_thread_independent():
    scene, preds = gradcheck_scene(16, seed=2)
    args = (preds, scene.depth, oracle_guidance(scene), scene.normals_gt, scene.intr, AsnConfig(guidance="oracle"), LossConfig())
    a = total_loss_grad(*args, threads=1)
    b = total_loss_grad(*args, threads=3)
    assert a.grad.tobytes() == b.grad.tobytes()


def test_numeric_grad_of_quadratic():
    d = DepthMap.dense(np.array([[1.0, 2.0], [3.0, 4.0]]))
    mask = np.array([[True, False], [True, True]])
    g = numeric_grad(lambda x: float(np.sum(x.values**2)), d, 1e-5, mask)
    assert np.isnan(g[0, 1])
    assert np.allclose(g[mask], 2 * d.values[mask], rtol=1e-8)


@pytest.mark.parametrize("seed", [0, 1])
def test_gradcheck_on_hemisphere(seed):
    scene, preds = gradcheck_scene(16, seed)
    report = gradcheck(
        preds, scene.depth, oracle_guidance(scene), scene.normals_gt, scene.intr,
        AsnConfig(guidance="oracle"), LossConfig(),
    )
    assert report.n_checked > 0
    assert report.passed, report
