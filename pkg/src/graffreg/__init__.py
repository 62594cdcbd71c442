"""Registration of lines and planes on the affine Grassmannian."""

from .cost import CostBreakdown, FeaturePair, PairKind, make_pairs, rotation_residual, total_cost, translation_residual
from .errors import GraffError
from .manifold import (
    AffineSubspace,
    RigidTransform,
    apply_transform,
    apply_transform_point,
    contains_point,
    embed,
    grassmann_distance,
    line,
    plane,
    point,
    principal_angles,
)
from .solver import SolverConfig, register_free, register_pairs

__all__ = [
    "AffineSubspace",
    "CostBreakdown",
    "FeaturePair",
    "GraffError",
    "PairKind",
    "RigidTransform",
    "SolverConfig",
    "apply_transform",
    "apply_transform_point",
    "contains_point",
    "embed",
    "grassmann_distance",
    "line",
    "make_pairs",
    "plane",
    "point",
    "principal_angles",
    "register_free",
    "register_pairs",
    "rotation_residual",
    "total_cost",
    "translation_residual",
]
