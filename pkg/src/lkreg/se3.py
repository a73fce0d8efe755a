"""SE(3) rigid-transform math: twists, exp/log maps, pose errors, perturbations.

Twist component order is fixed package-wide as (omega, v): rotation part in
components 0..2, translation part in components 3..5.  Jacobian columns,
perturbation sampling and the solver update all rely on this order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

Vec3 = NDArray[np.float64]
Mat3 = NDArray[np.float64]
Mat4 = NDArray[np.float64]

# Below this rotation angle the exp/log coefficient functions switch to
# second-order Taylor expansions (0/0 guards without precision loss).
SMALL_ANGLE = 1e-8

# log map rejects rotations closer to pi than this (ill-conditioned axis).
NEAR_PI_MARGIN = 1e-6


class AngleNearPi(ValueError):
    """Rotation angle within NEAR_PI_MARGIN of pi; the log map is ill-conditioned."""


def _vec3(x) -> Vec3:
    v = np.asarray(x, dtype=np.float64).reshape(3)
    return v


@dataclass(frozen=True)
class Twist:
    """Tangent-space parameterization of a rigid transform (omega, v)."""

    omega: Vec3
    v: Vec3

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega", _vec3(self.omega))
        object.__setattr__(self, "v", _vec3(self.v))

    def as_array(self) -> NDArray[np.float64]:
        """6-vector in the fixed (omega, v) order."""
        return np.concatenate([self.omega, self.v])

    @classmethod
    def from_array(cls, xi) -> "Twist":
        xi = np.asarray(xi, dtype=np.float64).reshape(6)
        return cls(omega=xi[:3], v=xi[3:])

    @classmethod
    def zero(cls) -> "Twist":
        return cls(omega=np.zeros(3), v=np.zeros(3))


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element stored as rotation matrix plus translation vector."""

    r: Mat3
    t: Vec3

    def __post_init__(self) -> None:
        r = np.asarray(self.r, dtype=np.float64).reshape(3, 3)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", _vec3(self.t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(r=np.eye(3), t=np.zeros(3))

    def matrix(self) -> Mat4:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.r
        m[:3, 3] = self.t
        return m

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        return cls(r=m[:3, :3], t=m[:3, 3])

    def inverse(self) -> "RigidTransform":
        rt = self.r.T
        return RigidTransform(r=rt, t=-rt @ self.t)

    def to_flat(self) -> list[float]:
        """Row-major 4x4 matrix as 16 numbers (the JSON wire format)."""
        return [float(x) for x in self.matrix().reshape(16)]

    @classmethod
    def from_flat(cls, values) -> "RigidTransform":
        values = np.asarray(values, dtype=np.float64)
        if values.size != 16:
            raise ValueError(f"expected 16 numbers, got {values.size}")
        return cls.from_matrix(values.reshape(4, 4))


def hat(w) -> Mat3:
    """Skew-symmetric matrix [w]_x with [w]_x p = w x p."""
    x, y, z = _vec3(w)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _rodrigues_coeffs(theta: float) -> tuple[float, float, float]:
    """(sin t/t, (1-cos t)/t^2, (t-sin t)/t^3) with Taylor branches near zero."""
    t2 = theta * theta
    if theta < SMALL_ANGLE:
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    s = math.sin(theta)
    c = math.cos(theta)
    return s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta)


def exp_twist(xi: Twist) -> RigidTransform:
    """Exponential map: Rodrigues rotation plus left-Jacobian translation."""
    omega = xi.omega
    theta = float(np.linalg.norm(omega))
    a, b, c = _rodrigues_coeffs(theta)
    k = hat(omega)
    k2 = k @ k
    r = np.eye(3) + a * k + b * k2
    v_mat = np.eye(3) + b * k + c * k2
    return RigidTransform(r=r, t=v_mat @ xi.v)


def log_transform(g: RigidTransform) -> Twist:
    """Inverse of exp_twist; canonical twist with rotation angle in [0, pi)."""
    tr = float(np.trace(g.r))
    cos_theta = min(1.0, max(-1.0, 0.5 * (tr - 1.0)))
    theta = math.acos(cos_theta)
    if theta > math.pi - NEAR_PI_MARGIN:
        raise AngleNearPi(f"rotation angle {theta:.9f} within {NEAR_PI_MARGIN} of pi")
    skew_part = 0.5 * np.array(
        [g.r[2, 1] - g.r[1, 2], g.r[0, 2] - g.r[2, 0], g.r[1, 0] - g.r[0, 1]]
    )
    t2 = theta * theta
    if theta < SMALL_ANGLE:
        # sin t/t inverse expanded: t/sin t = 1 + t^2/6 + 7 t^4/360 + ...
        omega = skew_part * (1.0 + t2 / 6.0)
        e = 1.0 / 12.0 + t2 / 720.0
    else:
        omega = skew_part * (theta / math.sin(theta))
        a, b, _ = _rodrigues_coeffs(theta)
        e = (1.0 - 0.5 * a / b) / t2
    k = hat(omega)
    v_inv = np.eye(3) - 0.5 * k + e * (k @ k)
    return Twist(omega=omega, v=v_inv @ g.t)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Matrix-product composition: result applies b first, then a."""
    return RigidTransform(r=a.r @ b.r, t=a.r @ b.t + a.t)


def transform_points(g: RigidTransform, points: NDArray[np.float64]) -> NDArray[np.float64]:
    """Apply g to an (N, 3) array of points."""
    points = np.asarray(points, dtype=np.float64)
    return points @ g.r.T + g.t


def rotation_error_deg(est: RigidTransform, gt: RigidTransform) -> float:
    """Geodesic angle of the relative rotation R_est R_gt^T, in degrees,
    in [0, 180].

    Evaluated as atan2(||skew part||, (trace - 1) / 2) rather than the
    equivalent acos form: near zero angle acos amplifies 1e-16 matrix noise
    to ~1e-6 degrees, which would swamp the zero-perturbation contracts.
    """
    rel = est.r @ gt.r.T
    cos_theta = 0.5 * (float(np.trace(rel)) - 1.0)
    sin_theta = 0.5 * math.sqrt(
        (rel[2, 1] - rel[1, 2]) ** 2
        + (rel[0, 2] - rel[2, 0]) ** 2
        + (rel[1, 0] - rel[0, 1]) ** 2
    )
    return math.degrees(math.atan2(sin_theta, cos_theta))


def translation_error(est: RigidTransform, gt: RigidTransform) -> float:
    """Euclidean distance between the translation vectors."""
    return float(np.linalg.norm(est.t - gt.t))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _random_unit(rng: np.random.Generator) -> Vec3:
    u = rng.normal(size=3)
    norm = np.linalg.norm(u)
    while norm < 1e-12:
        u = rng.normal(size=3)
        norm = np.linalg.norm(u)
    return u / norm


def _build_perturbation(
    rng: np.random.Generator, angle_deg: float, max_trans: float
) -> RigidTransform:
    # Draw order is part of the determinism contract: axis, angle is supplied,
    # translation direction, translation radius.
    axis = _random_unit(rng)
    omega = axis * math.radians(angle_deg)
    direction = _random_unit(rng)
    radius = max_trans * rng.uniform() ** (1.0 / 3.0)
    rot = exp_twist(Twist(omega=omega, v=np.zeros(3)))
    return RigidTransform(r=rot.r, t=direction * radius)


def sample_perturbation(max_angle_deg: float, max_trans: float, seed) -> RigidTransform:
    """Random perturbation: axis uniform on the sphere, angle uniform in
    [0, max_angle_deg] degrees, translation uniform in the ball of radius
    max_trans.  Deterministic given the seed.
    """
    if not 0.0 <= max_angle_deg <= 179.0:
        raise ValueError(f"max_angle_deg must be in [0, 179], got {max_angle_deg}")
    rng = _as_rng(seed)
    axis = _random_unit(rng)
    angle_deg = rng.uniform(0.0, max_angle_deg)
    omega = axis * math.radians(angle_deg)
    direction = _random_unit(rng)
    radius = max_trans * rng.uniform() ** (1.0 / 3.0)
    rot = exp_twist(Twist(omega=omega, v=np.zeros(3)))
    return RigidTransform(r=rot.r, t=direction * radius)


def sample_perturbation_at(angle_deg: float, max_trans: float, seed) -> RigidTransform:
    """Random perturbation whose rotation angle is exactly angle_deg.

    Used by the benchmark sweep, where each grid point evaluates a fixed
    misalignment magnitude rather than a uniform range.
    """
    if not 0.0 <= angle_deg <= 179.0:
        raise ValueError(f"angle_deg must be in [0, 179], got {angle_deg}")
    return _build_perturbation(_as_rng(seed), angle_deg, max_trans)
