"""Shared scenes and the frozen golden snapshots."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from asndepth.backproject import backproject
from asndepth.core_types import DepthMap, Intrinsics
from asndepth.synthetic import gen_hemisphere, gen_plane, gen_step

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture
def intr32() -> Intrinsics:
    return Intrinsics.for_resolution(32)


@pytest.fixture
def slanted_plane(intr32):
    return gen_plane(intr32, (0.3, -0.2, 1.0), 3.0)


@pytest.fixture
def fronto_plane(intr32):
    return gen_plane(intr32, (0.0, 0.0, 1.0), 2.0)


@pytest.fixture
def hemisphere(intr32):
    return gen_hemisphere(intr32)


@pytest.fixture
def step(intr32):
    return gen_step(intr32, 2.0, 3.0, 16)


@pytest.fixture
def plane_points(slanted_plane):
    return backproject(slanted_plane.depth, slanted_plane.intr)


@pytest.fixture
def ripple():
    """``ripple(depth)``: ``depth + 0.02 sin(0.7 u + 0.3 v)``, a seed-free stand-in for noise."""

    def apply(depth: DepthMap) -> DepthMap:
        v, u = np.mgrid[0 : depth.height, 0 : depth.width]
        return DepthMap(depth.values + 0.02 * np.sin(0.7 * u + 0.3 * v), depth.valid)

    return apply


@pytest.fixture
def golden():
    """``golden(name)``: text of the frozen snapshot ``tests/golden/<name>``; a missing file fails."""

    def load(name: str) -> str:
        path = GOLDEN_DIR / name
        if not path.is_file():
            pytest.fail(f"golden file {path} is missing")
        return path.read_text(encoding="utf-8")

    return load
