import numpy as np
import pytest
from hypothesis import given, strategies as st

from asndepth.backproject import backproject
from asndepth.core_types import (
    DepthMap,
    GuidanceFeatureMap,
    Intrinsics,
    NormalMap,
    PointMap,
    TripletSet,
    project,
)
from asndepth.errors import ContractError, DomainError


def test_project_optical_axis():
    intr = Intrinsics(fx=1, fy=1, cx=0, cy=0, width=1, height=1)
    assert project((0, 0, 1), intr) == (0.0, 0.0)


def test_project_hand_evaluated():
    intr = Intrinsics(fx=100, fy=100, cx=50, cy=50, width=200, height=200)
    assert project((1, 0, 2), intr) == (100.0, 50.0)


def test_project_symmetry_about_principal_point():
    intr = Intrinsics(fx=1, fy=1, cx=0, cy=0, width=1, height=1)
    assert project((0, -1, 1), intr) == (0.0, -1.0)


@pytest.mark.parametrize("z", [0.0, -1.0, float("nan")])
def test_project_rejects_non_positive_depth(z):
    with pytest.raises(DomainError):
        project((0.0, 0.0, z), Intrinsics.for_resolution(8))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(fx=0, fy=1, cx=0, cy=0, width=4, height=4),
        dict(fx=1, fy=-1, cx=0, cy=0, width=4, height=4),
        dict(fx=1, fy=1, cx=4, cy=0, width=4, height=4),
        dict(fx=1, fy=1, cx=0, cy=-1, width=4, height=4),
        dict(fx=1, fy=1, cx=0, cy=0, width=0, height=4),
    ],
)
def test_intrinsics_invariants(kwargs):
    with pytest.raises(ContractError):
        Intrinsics(**kwargs)


def test_synthetic_intrinsics():
    intr = Intrinsics.for_resolution(64)
    assert (intr.fx, intr.fy, intr.cx, intr.cy) == (64.0, 64.0, 32.0, 32.0)
    assert intr.shape == (64, 64)


def test_depth_grid_length_mismatch_rejected():
    with pytest.raises(ContractError):
        DepthMap.from_flat(3, 2, np.ones(5), np.ones(6, dtype=bool))
    with pytest.raises(ContractError):
        DepthMap(np.ones((2, 3)), np.ones((3, 2), dtype=bool))


def test_depth_valid_implies_positive_finite():
    with pytest.raises(ContractError):
        DepthMap(np.array([[1.0, 0.0]]), np.array([[True, True]]))
    with pytest.raises(ContractError):
        DepthMap(np.array([[1.0, np.inf]]), np.array([[True, True]]))
    d = DepthMap(np.array([[1.0, 0.0]]), np.array([[True, False]]))
    assert d.valid.tolist() == [[True, False]]


def test_depth_is_immutable():
    d = DepthMap.dense(np.ones((2, 2)))
    with pytest.raises(ValueError):
        d.values[0, 0] = 5.0


def test_dense_marks_non_positive_invalid():
    d = DepthMap.dense(np.array([[1.0, -1.0], [np.nan, 2.0]]))
    assert d.valid.tolist() == [[True, False], [False, True]]


def test_point_map_rejects_behind_camera():
    pts = np.zeros((1, 1, 3))
    with pytest.raises(ContractError):
        PointMap(pts, np.ones((1, 1), dtype=bool))
    PointMap(pts, np.zeros((1, 1), dtype=bool))


def test_normal_map_requires_unit_length():
    with pytest.raises(ContractError):
        NormalMap(np.full((1, 1, 3), 1.0), np.ones((1, 1), dtype=bool))
    n = NormalMap.uniform((0, 0, -2), (2, 3))
    assert np.allclose(n.normals, [0.0, 0.0, -1.0])


def test_camera_facing_check(fronto_plane, intr32):
    pm = backproject(fronto_plane.depth, intr32)
    assert fronto_plane.normals_gt.is_camera_facing(pm)
    assert not NormalMap.uniform((0, 0, 1), intr32.shape).is_camera_facing(pm)


def test_guidance_promotes_2d_and_rejects_nan():
    f = GuidanceFeatureMap(np.zeros((3, 4)))
    assert f.channels == 1 and f.shape == (3, 4)
    with pytest.raises(ContractError):
        GuidanceFeatureMap(np.array([[[np.nan]]]))


def test_triplet_set_lengths():
    ts = TripletSet(center=(0, 0), entries=np.zeros((2, 3), int), offsets=np.zeros((2, 3, 2), int), areas=np.ones(2))
    assert len(ts) == 2 and not ts.empty
    assert np.isnan(ts.confidences).all()
    with pytest.raises(ContractError):
        TripletSet(center=(0, 0), entries=np.zeros((2, 3), int), offsets=np.zeros((1, 3, 2), int), areas=np.ones(2))


@given(
    u=st.integers(0, 31),
    v=st.integers(0, 23),
    depth=st.floats(0.05, 100.0),
    fx=st.floats(5.0, 500.0),
    fy=st.floats(5.0, 500.0),
)
def test_project_inverts_backproject(u, v, depth, fx, fy):
    intr = Intrinsics(fx=fx, fy=fy, cx=15.5, cy=11.0, width=32, height=24)
    values = np.ones(intr.shape)
    values[v, u] = depth
    pm = backproject(DepthMap.dense(values), intr)
    pu, pv = project(pm.points[v, u], intr)
    assert abs(pu - u) < 1e-6 and abs(pv - v) < 1e-6
