"""File formats: ASNR v1 rasters, intrinsics text files, result CSVs.

ASNR v1 layout (little endian)::

    offset 0   b"ASNR"
    offset 4   u32 version (1)
    offset 8   u32 width
    offset 12  u32 height
    offset 16  u32 channels
    offset 20  u32 dtype tag: 1 = float32, 2 = uint8 mask, 3 = int32 segments
    offset 24  row-major, channel-interleaved payload

Values live in memory as float64 and on disk as float32. Every write goes to
a temporary file in the target directory and is renamed into place.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import struct
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .core_types import DepthMap, GuidanceFeatureMap, Intrinsics, NormalMap
from .errors import ContractError, ParseError
from .synthetic import Scene

logger = logging.getLogger(__name__)

MAGIC = b"ASNR"
VERSION = 1
HEADER = struct.Struct("<4s5I")
DTYPE_F32, DTYPE_U8, DTYPE_I32 = 1, 2, 3
_DTYPES = {DTYPE_F32: np.dtype("<f4"), DTYPE_U8: np.dtype("u1"), DTYPE_I32: np.dtype("<i4")}
# guards the size computation against absurd headers
MAX_ELEMENTS = 1 << 34
INTRINSICS_KEYS = ("fx", "fy", "cx", "cy", "width", "height")
CSV_DIGITS = 9


@dataclass(frozen=True)
class Raster:
    """Raw raster as stored on disk: ``data`` has shape ``(H, W, C)``."""

    data: np.ndarray
    dtype_tag: int

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@contextmanager
def atomic_path(path: str | os.PathLike) -> Iterator[Path]:
    """Yield a temporary sibling of ``path``; it replaces ``path`` on success."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def encode_raster(raster: Raster) -> bytes:
    data = np.asarray(raster.data)
    if data.ndim == 2:
        data = data[..., None]
    if raster.dtype_tag not in _DTYPES:
        raise ContractError(f"unknown dtype tag {raster.dtype_tag}")
    h, w, c = data.shape
    payload = np.ascontiguousarray(data, dtype=_DTYPES[raster.dtype_tag]).tobytes()
    return HEADER.pack(MAGIC, VERSION, w, h, c, raster.dtype_tag) + payload


def decode_raster(blob: bytes, path: str | None = None) -> Raster:
    if len(blob) < HEADER.size:
        raise ParseError(f"file holds {len(blob)} bytes, header needs {HEADER.size}", len(blob), path)
    magic, version, w, h, c, tag = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", 0, path)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", 4, path)
    if tag not in _DTYPES:
        raise ParseError(f"unknown dtype tag {tag}", 20, path)
    if c == 0:
        raise ParseError("zero channels", 16, path)
    elements = w * h * c
    if elements > MAX_ELEMENTS:
        raise ParseError(f"dimensions {w}x{h}x{c} overflow the element limit", 8, path)
    expected = elements * _DTYPES[tag].itemsize
    actual = len(blob) - HEADER.size
    if actual != expected:
        raise ParseError(f"payload is {actual} bytes, header declares {expected}", HEADER.size + min(actual, expected), path)
    data = np.frombuffer(blob, dtype=_DTYPES[tag], offset=HEADER.size).reshape(h, w, c).copy()
    return Raster(data, tag)


def write_raster(raster: Raster, path: str | os.PathLike) -> None:
    blob = encode_raster(raster)
    with atomic_path(path) as tmp:
        tmp.write_bytes(blob)
    logger.debug("wrote %s (%d bytes)", path, len(blob))


def read_raster(path: str | os.PathLike) -> Raster:
    return decode_raster(Path(path).read_bytes(), str(path))


def mask_path(path: str | os.PathLike) -> Path:
    """Companion mask of a depth raster: ``depth.asnr`` -> ``depth.mask.asnr``."""
    p = Path(path)
    return p.with_name(f"{p.stem}.mask{p.suffix}")


def write_depth(depth: DepthMap, path: str | os.PathLike) -> None:
    write_raster(Raster(np.where(depth.valid, depth.values, 0.0)[..., None], DTYPE_F32), path)
    write_raster(Raster(depth.valid.astype(np.uint8)[..., None], DTYPE_U8), mask_path(path))


def read_depth(path: str | os.PathLike) -> DepthMap:
    """Depth raster plus companion mask; without a mask, finite positive values are valid."""
    raster = read_raster(path)
    if raster.channels != 1 or raster.dtype_tag != DTYPE_F32:
        raise ParseError("depth raster must be 1-channel float32", 16, str(path))
    values = raster.data[..., 0].astype(np.float64)
    companion = mask_path(path)
    if companion.exists():
        mask = read_raster(companion)
        if mask.data.shape[:2] != values.shape or mask.dtype_tag != DTYPE_U8:
            raise ParseError("mask raster does not match its depth raster", 8, str(companion))
        valid = mask.data[..., 0] != 0
    else:
        with np.errstate(invalid="ignore"):
            valid = np.isfinite(values) & (values > 0)
    try:
        return DepthMap(values, valid)
    except ContractError as exc:
        raise ParseError(str(exc), HEADER.size, str(path)) from exc


def write_normals(normals: NormalMap, path: str | os.PathLike) -> None:
    """Invalid pixels are stored as NaN."""
    data = np.where(normals.valid[..., None], normals.normals, np.nan)
    write_raster(Raster(data, DTYPE_F32), path)


def read_normals(path: str | os.PathLike) -> NormalMap:
    raster = read_raster(path)
    if raster.channels != 3 or raster.dtype_tag != DTYPE_F32:
        raise ParseError("normal raster must be 3-channel float32", 16, str(path))
    data = raster.data.astype(np.float64)
    valid = np.all(np.isfinite(data), axis=-1)
    # float32 storage; renormalise so the unit-length invariant holds in float64
    norms = np.linalg.norm(np.where(valid[..., None], data, 0.0), axis=-1, keepdims=True)
    valid &= norms[..., 0] > 0
    data = np.where(valid[..., None], data / np.where(norms > 0, norms, 1.0), 0.0)
    return NormalMap(data, valid)


def write_segments(segments: np.ndarray, path: str | os.PathLike) -> None:
    write_raster(Raster(np.asarray(segments, dtype=np.int32)[..., None], DTYPE_I32), path)


def read_segments(path: str | os.PathLike) -> np.ndarray:
    raster = read_raster(path)
    if raster.channels != 1 or raster.dtype_tag != DTYPE_I32:
        raise ParseError("segment raster must be 1-channel int32", 16, str(path))
    return raster.data[..., 0]


def write_guidance(f: GuidanceFeatureMap, path: str | os.PathLike) -> None:
    write_raster(Raster(f.features, DTYPE_F32), path)


def read_guidance(path: str | os.PathLike, scale: float = 1.0) -> GuidanceFeatureMap:
    """Any float32 raster as a C-channel feature map, multiplied by ``scale``."""
    raster = read_raster(path)
    if raster.dtype_tag != DTYPE_F32:
        raise ParseError("guidance raster must be float32", 20, str(path))
    data = raster.data.astype(np.float64) * scale
    if not np.all(np.isfinite(data)):
        raise ParseError("guidance raster holds non-finite values", HEADER.size, str(path))
    return GuidanceFeatureMap(data)


def read_intrinsics(path: str | os.PathLike) -> Intrinsics:
    """``key = value`` lines for fx, fy, cx, cy, width, height; ``#`` comments allowed."""
    values: dict[str, float] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep:
            raise ParseError(f"expected 'key = value', got {raw!r}", lineno, str(path))
        if key not in INTRINSICS_KEYS:
            raise ParseError(f"unknown key {key!r}", lineno, str(path))
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno, str(path))
        try:
            values[key] = float(value)
        except ValueError:
            raise ParseError(f"{key} is not a number: {value!r}", lineno, str(path)) from None
    missing = [k for k in INTRINSICS_KEYS if k not in values]
    if missing:
        raise ParseError(f"missing keys {', '.join(missing)}", len(text.splitlines()), str(path))
    for key in ("width", "height"):
        if not values[key].is_integer():
            raise ParseError(f"{key} must be an integer, got {values[key]}", 0, str(path))
    try:
        return Intrinsics(
            fx=values["fx"], fy=values["fy"], cx=values["cx"], cy=values["cy"],
            width=int(values["width"]), height=int(values["height"]),
        )
    except ContractError as exc:
        raise ParseError(str(exc), 0, str(path)) from exc


def write_intrinsics(intr: Intrinsics, path: str | os.PathLike) -> None:
    lines = [f"{key} = {format_value(val)}" for key, val in intr.as_dict().items()]
    with atomic_path(path) as tmp:
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")


def format_value(value) -> str:
    """Floats with 9 significant digits; everything else via ``str``."""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value) and value.is_integer() and abs(value) < 1e15:
            return str(int(value))
        return f"{value:.{CSV_DIGITS}g}"
    return str(value)


def write_csv(
    rows: Iterable[Sequence[object] | Mapping[str, object]],
    path: str | os.PathLike,
    header: Sequence[str] | None = None,
    comments: Mapping[str, str] | None = None,
) -> None:
    """CSV with ``# key=value`` provenance lines, then a header row, then rows.

    Mapping rows take their columns from ``header`` (or the first row's keys).
    """
    rows = list(rows)
    if header is None and rows and isinstance(rows[0], Mapping):
        header = list(rows[0].keys())
    with atomic_path(path) as tmp:
        with tmp.open("w", newline="", encoding="utf-8") as fh:
            for key, value in (comments or {}).items():
                fh.write(f"# {key}={value}\n")
            writer = csv.writer(fh)
            if header is not None:
                writer.writerow(header)
            for row in rows:
                cells = [row[h] for h in header] if isinstance(row, Mapping) and header else row
                writer.writerow([format_value(v) for v in cells])


def read_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    """Rows of a CSV written by :func:`write_csv`, comment lines skipped."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


SCENE_FILES = {
    "depth": "depth.asnr",
    "normals": "normals.asnr",
    "segments": "segments.asnr",
    "intrinsics": "intrinsics.txt",
}


def write_scene(scene: Scene, outdir: str | os.PathLike) -> dict[str, Path]:
    """Write a scene bundle; returns the paths written (the depth mask included)."""
    out = Path(outdir)
    paths = {name: out / fname for name, fname in SCENE_FILES.items()}
    write_depth(scene.depth, paths["depth"])
    write_normals(scene.normals_gt, paths["normals"])
    write_segments(scene.segments, paths["segments"])
    write_intrinsics(scene.intr, paths["intrinsics"])
    paths["mask"] = mask_path(paths["depth"])
    return paths


def read_scene(outdir: str | os.PathLike, kind: str = "custom") -> Scene:
    src = Path(outdir)
    return Scene(
        depth=read_depth(src / SCENE_FILES["depth"]),
        normals_gt=read_normals(src / SCENE_FILES["normals"]),
        segments=read_segments(src / SCENE_FILES["segments"]),
        intr=read_intrinsics(src / SCENE_FILES["intrinsics"]),
        kind=kind,
    )
