import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from asndepth.backproject import backproject, view_align, view_align_many
from asndepth.core_types import DepthMap, Intrinsics
from asndepth.errors import ContractError, DomainError

INTR = Intrinsics(fx=4.0, fy=4.0, cx=2.0, cy=1.0, width=8, height=3)


def test_principal_point_maps_to_axis():
    values = np.full(INTR.shape, 1.0)
    pm = backproject(DepthMap.dense(values), INTR)
    assert pm.points[1, 2].tolist() == [0.0, 0.0, 1.0]


def test_hand_evaluated_point():
    values = np.full(INTR.shape, 2.0)
    pm = backproject(DepthMap.dense(values), INTR)
    # pixel (cx + fx, cy) = (6, 1)
    assert pm.points[1, 6].tolist() == [2.0, 0.0, 2.0]


def test_invalid_pixel_stays_invalid():
    values = np.ones(INTR.shape)
    valid = np.ones(INTR.shape, dtype=bool)
    valid[0, 3] = False
    pm = backproject(DepthMap(values, valid), INTR)
    assert not pm.valid[0, 3]
    assert pm.valid.sum() == valid.sum()


def test_dimension_mismatch():
    with pytest.raises(ContractError):
        backproject(DepthMap.dense(np.ones((4, 4))), INTR)


def test_depth_read_back_is_exact():
    rng = np.random.default_rng(3)
    values = rng.uniform(0.1, 10.0, INTR.shape)
    pm = backproject(DepthMap.dense(values), INTR)
    assert np.array_equal(pm.points[..., 2], values)


@pytest.mark.parametrize(
    "n, p, want",
    [
        ((0, 0, 1), (0, 0, 1), (0, 0, -1)),
        ((0, 0, -1), (0, 0, 1), (0, 0, -1)),
        ((0, 0, 2), (1, 1, 1), (0, 0, -1)),
    ],
)
def test_view_align_examples(n, p, want):
    assert view_align(n, p).tolist() == list(map(float, want))


def test_view_align_tie_keeps_input():
    assert view_align((2, 0, 0), (0, 0, 1)).tolist() == [1.0, 0.0, 0.0]


def test_view_align_zero_norm():
    with pytest.raises(DomainError):
        view_align((0, 0, 0), (0, 0, 1))


vec = st.tuples(*[st.floats(-10, 10, allow_nan=False)] * 3)


@given(n=vec, p=vec)
def test_view_align_is_idempotent_and_facing(n, p):
    assume(np.linalg.norm(n) > 1e-6)
    once = view_align(n, p)
    assume(abs(np.dot(once, p)) > 1e-9)
    assert np.allclose(view_align(once, p), once, rtol=0, atol=1e-12)
    assert np.dot(once, p) < 0


def test_view_align_many_matches_scalar():
    rng = np.random.default_rng(0)
    normals = rng.normal(size=(20, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    points = rng.normal(size=(20, 3)) + [0, 0, 3]
    aligned, sign = view_align_many(normals, points)
    for i in range(20):
        assert np.allclose(aligned[i], view_align(normals[i], points[i]))
    assert set(np.unique(sign)) <= {-1.0, 1.0}
