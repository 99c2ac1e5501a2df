"""asndepth: adaptive surface normals, baseline estimators and depth losses on synthetic scenes."""

from .asn import asn_normals, pixel_triplets, resolve_guidance
from .backproject import backproject, view_align
from .config import AsnConfig, LossConfig, SamplerConfig, SceneConfig, VirtualNormalConfig
from .core_types import DepthMap, GuidanceFeatureMap, Intrinsics, NormalMap, PointMap, TripletSet
from .errors import AsnError, ContractError, DomainError, NumericalError, ParseError

__version__ = "1.0.0"

__all__ = [
    "AsnConfig",
    "AsnError",
    "ContractError",
    "DepthMap",
    "DomainError",
    "GuidanceFeatureMap",
    "Intrinsics",
    "LossConfig",
    "NormalMap",
    "NumericalError",
    "ParseError",
    "PointMap",
    "SamplerConfig",
    "SceneConfig",
    "TripletSet",
    "VirtualNormalConfig",
    "asn_normals",
    "backproject",
    "pixel_triplets",
    "resolve_guidance",
    "view_align",
]
