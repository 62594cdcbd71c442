from .pipeline import RegistrationResult, SolverConfig, register_free, register_pairs
from .refine import refine_lm
from .rotation import (
    RotationCube,
    corr_rotation_bnb,
    find_correspondences,
    full_rotation_bnb,
    rotation_bnb,
    rotation_lower_bound,
    rotation_upper_bound,
)
from .translation import TranslationCube, TranslationProblem, translation_bnb, translation_bounds

__all__ = [
    "RegistrationResult",
    "RotationCube",
    "SolverConfig",
    "TranslationCube",
    "TranslationProblem",
    "corr_rotation_bnb",
    "find_correspondences",
    "full_rotation_bnb",
    "refine_lm",
    "register_free",
    "register_pairs",
    "rotation_bnb",
    "rotation_lower_bound",
    "rotation_upper_bound",
    "translation_bnb",
    "translation_bounds",
]
