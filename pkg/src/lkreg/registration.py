"""Alignment solvers: inverse-compositional Lucas-Kanade over encoder
feature space, and a point-to-point ICP baseline.

IC-LK update convention (fixed package-wide): the feature Jacobian J is
computed once on the target by twist-perturbing it with a negated step;
each iteration solves (J^T J + damping I) dxi = J^T r for the residual
r = phi(G_k P_S) - phi(P_T) and updates G_{k+1} = exp(dxi)^{-1} G_k.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from . import encoders as enc
from .autodiff import no_grad
from .cloud import NnIndex, PointCloud
from .se3 import RigidTransform, Twist, compose, exp_twist, transform_points


class SingularNormalEquations(RuntimeError):
    """J^T J + damping I is not positive definite (degenerate feature map)."""


class DegenerateCorrespondences(RuntimeError):
    """Cross-covariance is rank-deficient; the rigid update is not unique."""


@dataclass(frozen=True)
class LkSettings:
    max_iters: int = 10
    step_fd: float = 1e-2
    tol_dxi: float = 1e-7
    damping: float = 1e-9
    # Debug mode: recompute the Jacobian on the warped source each iteration
    # (forward-style) instead of once on the target.
    recompute_jacobian: bool = False
    # Safety clamp on ||dxi|| per iteration; keeps iterates finite even for
    # degenerate feature maps.
    max_step_norm: float = np.pi

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.step_fd <= 0 or self.tol_dxi <= 0 or self.damping < 0:
            raise ValueError("step_fd, tol_dxi must be > 0 and damping >= 0")


@dataclass
class RegistrationResult:
    g_est: RigidTransform
    iterations: int
    converged: bool
    residual_history: list[float] = field(default_factory=list)
    wall_time: float = 0.0


# ---------------------------------------------------------------------------
# feature-space IC-LK
# ---------------------------------------------------------------------------

def _twist_basis_transforms(step: float) -> list[RigidTransform]:
    out = []
    for i in range(6):
        xi = np.zeros(6)
        xi[i] = -step
        out.append(exp_twist(Twist.from_array(xi)))
    return out


def jacobian_fd(model: enc.EncoderModel, p_t: PointCloud, step_fd: float = 1e-2) -> NDArray[np.float64]:
    """K x 6 finite-difference feature Jacobian, computed on the target.

    Column i = (phi(exp(-step e_i) P_T) - phi(P_T)) / (-step): the
    inverse-compositional convention of perturbing the target with a
    negated step.
    """
    base = p_t.points
    stackable = [base] + [transform_points(g, base) for g in _twist_basis_transforms(step_fd)]
    with no_grad():
        phis = enc.forward_batch(model, np.stack(stackable, axis=0)).data
    return (phis[1:] - phis[0]).T / (-step_fd)


def solve_increment(j: NDArray[np.float64], damping: float) -> NDArray[np.float64]:
    """6 x K solve operator (J^T J + damping I)^{-1} J^T via Cholesky."""
    normal = j.T @ j + damping * np.eye(6)
    try:
        cho = scipy.linalg.cho_factor(normal)
        return scipy.linalg.cho_solve(cho, j.T)
    except scipy.linalg.LinAlgError as e:
        raise SingularNormalEquations(str(e)) from e


def iclk_register(
    model: enc.EncoderModel,
    p_s: PointCloud,
    p_t: PointCloud,
    settings: LkSettings = LkSettings(),
) -> RegistrationResult:
    """Iterative feature-space alignment of p_s onto p_t.

    Both clouds are expected in the shared normalized convention (centroid
    at the origin, max radius 1).
    """
    t0 = time.perf_counter()
    with no_grad():
        phi_t = enc.forward(model, p_t).data
        solve = None
        if not settings.recompute_jacobian:
            solve = solve_increment(jacobian_fd(model, p_t, settings.step_fd), settings.damping)
        g = RigidTransform.identity()
        history: list[float] = []
        converged = False
        iterations = 0
        for _ in range(settings.max_iters):
            iterations += 1
            warped = PointCloud(transform_points(g, p_s.points))
            r = enc.forward(model, warped).data - phi_t
            history.append(float(np.linalg.norm(r)))
            if settings.recompute_jacobian:
                solve = solve_increment(
                    jacobian_fd(model, warped, settings.step_fd), settings.damping
                )
            dxi = solve @ r
            step_norm = float(np.linalg.norm(dxi))
            if step_norm > settings.max_step_norm:
                dxi = dxi * (settings.max_step_norm / step_norm)
            g = compose(exp_twist(Twist.from_array(dxi)).inverse(), g)
            if step_norm < settings.tol_dxi:
                converged = True
                break
    return RegistrationResult(
        g_est=g,
        iterations=iterations,
        converged=converged,
        residual_history=history,
        wall_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# point-to-point ICP
# ---------------------------------------------------------------------------

def best_rigid(a: NDArray[np.float64], b: NDArray[np.float64]) -> RigidTransform:
    """Least-squares rigid transform mapping a[i] onto b[i] (SVD, det +1)."""
    ca = a.mean(axis=0)
    cb = b.mean(axis=0)
    h = (a - ca).T @ (b - cb)
    u, s, vt = np.linalg.svd(h)
    if s[0] <= 0.0 or s[1] <= s[0] * 1e-12:
        raise DegenerateCorrespondences(
            f"cross-covariance is rank-deficient (singular values {s})"
        )
    d = np.sign(np.linalg.det(vt.T @ u.T))
    diag = np.diag([1.0, 1.0, d])
    r = vt.T @ diag @ u.T
    return RigidTransform(r=r, t=cb - r @ ca)


def icp_register(
    p_s: PointCloud,
    p_t: PointCloud,
    max_iters: int = 50,
    tol: float = 1e-9,
) -> RegistrationResult:
    """Point-to-point ICP: nearest-neighbor matches plus SVD rigid updates.

    Stops when the incremental pose change (twist norm) drops below tol.
    """
    t0 = time.perf_counter()
    index = NnIndex(p_t)
    g = RigidTransform.identity()
    history: list[float] = []
    converged = False
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        src = transform_points(g, p_s.points)
        dists, idx = index.nearest(src)
        history.append(float(np.sqrt(np.mean(dists * dists))))
        delta = best_rigid(src, p_t.points[idx])
        g = compose(delta, g)
        change = float(np.linalg.norm(delta.r - np.eye(3)) + np.linalg.norm(delta.t))
        if change < tol:
            converged = True
            break
    return RegistrationResult(
        g_est=g,
        iterations=iterations,
        converged=converged,
        residual_history=history,
        wall_time=time.perf_counter() - t0,
    )
