"""Validated, frozen configuration models.

All models are immutable so one instance can be shared by every worker thread.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any, Literal, Mapping

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SamplerConfig(_Frozen):
    """Local patch and random triplet sampling parameters."""

    patch_size: int = Field(default=5, ge=3)
    k: int = Field(default=40, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    collinearity_eps: float = Field(default=0.25, ge=0.0)
    max_resample: int = Field(default=16, ge=0)

    @field_validator("patch_size")
    @classmethod
    def _odd(cls, v: int) -> int:
        if v % 2 != 1:
            raise ValueError(f"patch_size must be odd, got {v}")
        return v

    @property
    def radius(self) -> int:
        return self.patch_size // 2


GuidanceKind = Literal["constant", "oracle", "external"]


class AsnConfig(_Frozen):
    """Switches for the adaptive surface normal operator.

    With both adaptions disabled the weighted combination reduces to an
    unweighted mean of the candidate normals.
    """

    sampler: SamplerConfig = SamplerConfig()
    use_area: bool = True
    use_context: bool = True
    guidance: GuidanceKind = "constant"
    guidance_path: str | None = None
    # multiplies external feature rasters before the kernel is evaluated
    guidance_scale: float = Field(default=1.0, gt=0.0)
    oracle_separation: float = Field(default=10.0, gt=0.0)

    @model_validator(mode="after")
    def _external_needs_path(self) -> "AsnConfig":
        if self.guidance == "external" and not self.guidance_path:
            raise ValueError("guidance='external' requires guidance_path")
        return self


class LossConfig(_Frozen):
    """Weights of the multi-scale depth term and the normal term.

    ``legacy_exponent=True`` weights scale ``s`` by ``lam ** (s - 3)`` (finest
    scale weight 1, coarser scales weighted up); ``False`` uses
    ``lam ** (3 - s)``.
    """

    lam: float = Field(default=0.8, gt=0.0, le=1.0)
    alpha: float = Field(default=5.0, ge=0.0)
    scales: int = Field(default=4, ge=1)
    legacy_exponent: bool = True

    def scale_weight(self, level: int) -> float:
        """Weight of pyramid ``level`` where 0 is the finest scale."""
        exponent = -level if self.legacy_exponent else level
        return float(self.lam**exponent)


class VirtualNormalConfig(_Frozen):
    num_triplets: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    min_dist: float = Field(default=0.1, ge=0.0)
    min_angle_deg: float = Field(default=5.0, ge=0.0, lt=60.0)


SceneKind = Literal["plane", "hemisphere", "step", "wedge"]


class SceneConfig(_Frozen):
    """Parameters of the synthetic scenes used by the CLI and experiments."""

    kind: SceneKind = "hemisphere"
    res: int = Field(default=128, ge=4)
    sigma: float = Field(default=0.0, ge=0.0)
    # Gaussian blur std of the noise field in px; 0 gives i.i.d. noise
    correlation: float = Field(default=0.0, ge=0.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    radius: float = Field(default=1.0, gt=0.0)
    distance: float = Field(default=3.0, gt=0.0)
    background: bool = True


def config_hash(obj: BaseModel | Mapping[str, Any]) -> str:
    """First 12 hex digits of the SHA-256 of the canonical JSON dump."""
    data = obj.model_dump(mode="json") if isinstance(obj, BaseModel) else dict(obj)
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]
