"""Encoder training through the iterative alignment forward pass.

Each training sample runs the feature-space LK loop on its pair.  The
finite-difference Jacobian and the per-iteration solve operator are
constants (matching the solver), while gradients flow through every
iteration's feature residual and through a differentiable exponential map
into the pose loss.  Samples in a batch run the loop in lockstep so the
encoder forward is evaluated once per iteration for the whole batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from . import autodiff as ad
from . import encoders as enc
from .autodiff import Tensor, no_grad, zero_grads
from .cloud import PointCloud
from .optim import AdamState, adam_step
from .registration import LkSettings, _twist_basis_transforms, solve_increment
from .se3 import RigidTransform, sample_perturbation, transform_points

Pair = tuple[PointCloud, PointCloud, RigidTransform]

_SMALL_THETA2 = 1e-16


class EmptyDataset(ValueError):
    """Training requires at least one pair."""


# ---------------------------------------------------------------------------
# differentiable exponential map
# ---------------------------------------------------------------------------

def exp_twist_graph(xi: Tensor) -> Tensor:
    """Batched SE(3) exponential map on tensors; xi: (B, 6) -> (B, 4, 4).

    Mirrors se3.exp_twist, with Taylor branches selected by a constant mask
    so the gradient is defined at zero rotation.
    """
    b = xi.shape[0]
    omega = xi[:, 0:3]
    v = xi[:, 3:6]
    theta2 = ad.sum_(ad.mul(omega, omega), axis=1)  # (B,)
    mask = theta2.data < _SMALL_THETA2
    theta2_safe = ad.where(mask, Tensor(np.ones(b)), theta2)
    theta = ad.sqrt(theta2_safe)
    sin_t = ad.sin(theta)
    cos_t = ad.cos(theta)
    coeff_a = ad.where(
        mask,
        ad.sub(1.0, ad.div(theta2, 6.0)),
        ad.div(sin_t, theta),
    )
    coeff_b = ad.where(
        mask,
        ad.sub(0.5, ad.div(theta2, 24.0)),
        ad.div(ad.sub(1.0, cos_t), theta2_safe),
    )
    coeff_c = ad.where(
        mask,
        ad.sub(1.0 / 6.0, ad.div(theta2, 120.0)),
        ad.div(ad.sub(theta, sin_t), ad.mul(theta2_safe, theta)),
    )
    zero = Tensor(np.zeros(b))
    x, y, z = omega[:, 0], omega[:, 1], omega[:, 2]
    k = ad.stack(
        [
            ad.stack([zero, ad.neg(z), y], axis=1),
            ad.stack([z, zero, ad.neg(x)], axis=1),
            ad.stack([ad.neg(y), x, zero], axis=1),
        ],
        axis=1,
    )  # (B, 3, 3)
    k2 = ad.matmul(k, k)
    eye = Tensor(np.eye(3))
    a3 = ad.reshape(coeff_a, (b, 1, 1))
    b3 = ad.reshape(coeff_b, (b, 1, 1))
    c3 = ad.reshape(coeff_c, (b, 1, 1))
    rot = ad.add(eye, ad.add(ad.mul(a3, k), ad.mul(b3, k2)))
    vmat = ad.add(eye, ad.add(ad.mul(b3, k), ad.mul(c3, k2)))
    trans = ad.matmul(vmat, ad.reshape(v, (b, 3, 1)))
    top = ad.concat([rot, trans], axis=2)  # (B, 3, 4)
    bottom = Tensor(np.broadcast_to(np.array([0.0, 0.0, 0.0, 1.0]), (b, 1, 4)).copy())
    return ad.concat([top, bottom], axis=1)


# ---------------------------------------------------------------------------
# batched LK forward
# ---------------------------------------------------------------------------

def _warp_batch(g: NDArray, pts: NDArray) -> NDArray:
    """Apply per-sample 4x4 transforms; g: (B, 4, 4), pts: (B, N, 3)."""
    return np.einsum("bij,bnj->bni", g[:, :3, :3], pts) + g[:, None, :3, 3]


def _batched_jacobian(model: enc.EncoderModel, targets: NDArray, phi_t: NDArray, lk: LkSettings) -> NDArray:
    """Per-sample K x 6 feature Jacobians on the targets (no gradients)."""
    b, _, _ = targets.shape
    basis = _twist_basis_transforms(lk.step_fd)
    variants = np.stack(
        [transform_points(g6, targets[i]) for i in range(b) for g6 in basis], axis=0
    )
    with no_grad():
        phis = enc.forward_batch(model, variants).data
    k = phis.shape[1]
    diffs = phis.reshape(b, 6, k) - phi_t[:, None, :]
    return np.swapaxes(diffs / (-lk.step_fd), 1, 2)  # (B, K, 6)


def lk_forward_batch(
    model: enc.EncoderModel,
    sources: NDArray,
    targets: NDArray,
    lk: LkSettings,
) -> tuple[Tensor, Tensor, NDArray]:
    """Run the LK loop on a batch, keeping the pose chain differentiable.

    Returns (G_est tensor (B, 4, 4), phi_t tensor (B, K), final pose values).
    Runs exactly lk.max_iters iterations (no early stop while training).
    """
    b = sources.shape[0]
    phi_t = enc.forward_batch(model, targets)  # (B, K), in graph
    jac = _batched_jacobian(model, targets, phi_t.data, lk)
    solve = np.stack([solve_increment(jac[i], lk.damping) for i in range(b)], axis=0)
    solve_t = Tensor(solve)  # (B, 6, K), constant
    g_value = np.broadcast_to(np.eye(4), (b, 4, 4)).copy()
    g_chain = Tensor(g_value.copy())
    for _ in range(lk.max_iters):
        warped = _warp_batch(g_value, sources)
        phi_s = enc.forward_batch(model, warped)
        r = ad.sub(phi_s, phi_t)  # (B, K)
        dxi = ad.reshape(ad.matmul(solve_t, ad.reshape(r, (b, phi_t.shape[1], 1))), (b, 6))
        norms = np.linalg.norm(dxi.data, axis=1, keepdims=True)
        factor = np.minimum(1.0, lk.max_step_norm / np.maximum(norms, 1e-300))
        dxi = ad.mul(dxi, Tensor(factor))
        delta_inv = exp_twist_graph(ad.neg(dxi))  # exp(dxi)^{-1}
        g_chain = ad.matmul(delta_inv, g_chain)
        g_value = g_chain.data.copy()
    return g_chain, phi_t, g_value


def batch_loss(
    model: enc.EncoderModel,
    sources: NDArray,
    targets: NDArray,
    gts: list[RigidTransform],
    lk: LkSettings,
    lam: float = 0.001,
) -> Tensor:
    """Mean combined loss over a batch: pose Frobenius term plus the
    feature-residual regularizer on the aligned source."""
    b = sources.shape[0]
    g_chain, phi_t, g_value = lk_forward_batch(model, sources, targets, lk)
    gt_inv = np.stack([g.inverse().matrix() for g in gts], axis=0)
    rel = ad.sub(ad.matmul(g_chain, Tensor(gt_inv)), Tensor(np.eye(4)))
    frob = ad.sqrt(ad.add(ad.sum_(ad.mul(rel, rel), axis=(1, 2)), enc._FROBENIUS_EPS))
    aligned = _warp_batch(g_value, sources)
    phi_aligned = enc.forward_batch(model, aligned)
    diff = ad.sub(phi_aligned, phi_t)
    reg = ad.sum_(ad.mul(diff, diff), axis=1)
    return ad.add(ad.mean(frob), ad.mul(Tensor(lam), ad.mean(reg)))


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainSettings:
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-4
    seed: int = 0
    lam: float = 0.001
    lk: LkSettings = field(default_factory=lambda: LkSettings(max_iters=5))
    # When set, every sample is re-perturbed each time it is drawn: the
    # source is first aligned with its ground truth, then displaced by a
    # fresh seeded perturbation of at most this angle / translation.
    augment_max_angle_deg: float | None = None
    augment_max_trans: float = 0.05
    # With-replacement step mode (used for single-pair overfitting); when
    # set, `epochs` is ignored and exactly `steps` optimizer updates run.
    steps: int | None = None


@dataclass
class TrainReport:
    step_losses: list[float] = field(default_factory=list)
    epoch_train_loss: list[float] = field(default_factory=list)
    epoch_val_loss: list[float] = field(default_factory=list)


def _assemble_batch(
    dataset: list[Pair],
    indices,
    settings: TrainSettings,
    rng: np.random.Generator,
) -> tuple[NDArray, NDArray, list[RigidTransform]]:
    sources, targets, gts = [], [], []
    for i in indices:
        p_s, p_t, g_gt = dataset[int(i)]
        src, gt = p_s.points, g_gt
        if settings.augment_max_angle_deg is not None:
            aligned = transform_points(g_gt, src)
            d = sample_perturbation(settings.augment_max_angle_deg, settings.augment_max_trans, rng)
            src = transform_points(d, aligned)
            gt = d.inverse()
        sources.append(src)
        targets.append(p_t.points)
        gts.append(gt)
    return np.stack(sources), np.stack(targets), gts


def evaluate_loss(
    model: enc.EncoderModel,
    dataset: list[Pair],
    settings: TrainSettings,
    batch_size: int = 16,
) -> float:
    """Mean batch loss over a dataset without recording gradients."""
    if not dataset:
        raise EmptyDataset("empty dataset")
    rng = np.random.default_rng(0)
    eval_settings = replace(settings, augment_max_angle_deg=None)
    total = 0.0
    count = 0
    with no_grad():
        for lo in range(0, len(dataset), batch_size):
            idx = range(lo, min(lo + batch_size, len(dataset)))
            src, tgt, gts = _assemble_batch(dataset, idx, eval_settings, rng)
            loss = batch_loss(model, src, tgt, gts, eval_settings.lk, eval_settings.lam)
            total += loss.item() * len(gts)
            count += len(gts)
    return total / count


def train(
    model: enc.EncoderModel,
    dataset: list[Pair],
    settings: TrainSettings = TrainSettings(),
    val_dataset: list[Pair] | None = None,
) -> tuple[enc.EncoderModel, TrainReport]:
    """Optimize the encoder in place; deterministic given settings.seed."""
    if not dataset:
        raise EmptyDataset("empty dataset")
    rng = np.random.default_rng(settings.seed)
    params = model.trainable()
    state = AdamState.init(params, lr=settings.lr)
    report = TrainReport()

    def run_step(indices) -> float:
        src, tgt, gts = _assemble_batch(dataset, indices, settings, rng)
        loss = batch_loss(model, src, tgt, gts, settings.lk, settings.lam)
        zero_grads(params)
        ad.backward(loss)
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
        adam_step(params, grads, state)
        value = loss.item()
        report.step_losses.append(value)
        return value

    if settings.steps is not None:
        for _ in range(settings.steps):
            indices = rng.integers(len(dataset), size=settings.batch_size)
            run_step(indices)
        return model, report

    for _ in range(settings.epochs):
        perm = rng.permutation(len(dataset))
        epoch_losses = []
        for lo in range(0, len(dataset), settings.batch_size):
            epoch_losses.append(run_step(perm[lo : lo + settings.batch_size]))
        report.epoch_train_loss.append(float(np.mean(epoch_losses)))
        if val_dataset:
            report.epoch_val_loss.append(evaluate_loss(model, val_dataset, settings))
    return model, report
