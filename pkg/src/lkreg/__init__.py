"""Correspondence-free rigid point-cloud registration toolkit.

Feature-space inverse-compositional Lucas-Kanade alignment driven by global
point-cloud descriptors (PointNet-style MLP or a selective-SSM sequence
encoder), plus ray-cast pair generation, an ICP baseline, and a
perturbation-sweep benchmark harness.
"""

from .cloud import (
    BadCount,
    DegenerateCloud,
    NnIndex,
    NormalizeRecord,
    PointCloud,
    apply,
    chamfer_distance,
    hausdorff_distance,
    normalize,
    subsample,
)
from .se3 import (
    AngleNearPi,
    RigidTransform,
    Twist,
    compose,
    exp_twist,
    log_transform,
    rotation_error_deg,
    sample_perturbation,
    sample_perturbation_at,
    transform_points,
    translation_error,
)

__all__ = [
    "AngleNearPi",
    "BadCount",
    "DegenerateCloud",
    "NnIndex",
    "NormalizeRecord",
    "PointCloud",
    "RigidTransform",
    "Twist",
    "apply",
    "chamfer_distance",
    "compose",
    "exp_twist",
    "hausdorff_distance",
    "log_transform",
    "normalize",
    "rotation_error_deg",
    "sample_perturbation",
    "sample_perturbation_at",
    "subsample",
    "transform_points",
    "translation_error",
]
