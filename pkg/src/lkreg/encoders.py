"""Global point-cloud descriptors: a PointNet-style MLP baseline and a
selective state-space (Mamba-style) sequence encoder.

Both encoders map a cloud with N <= m_max points to a K-vector by pooling
per-point features with a max over the point axis.  The sequence encoder
first serializes the set into a canonical order (Morton by default) so the
descriptor is a well-defined function of the point set.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_blob, save_blob
from .cloud import PointCloud
from .se3 import RigidTransform

MORTON_BITS = 10

_RMS_EPS = 1e-6
_FROBENIUS_EPS = 1e-30  # keeps the norm differentiable at exactly zero


class TooManyPoints(ValueError):
    """Cloud exceeds the encoder's configured maximum point count."""


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "mamba"  # "mamba" | "mlp"
    d_model: int = 64
    n_blocks: int = 2
    d_state: int = 8
    k_out: int = 256
    m_max: int = 1024
    ordering: str = "morton"  # "morton" | "input"

    def __post_init__(self) -> None:
        if self.kind not in ("mamba", "mlp"):
            raise ValueError(f"unknown encoder kind: {self.kind!r}")
        if self.ordering not in ("morton", "input"):
            raise ValueError(f"unknown ordering: {self.ordering!r}")
        for name in ("d_model", "n_blocks", "d_state", "k_out", "m_max"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "d_model": self.d_model,
            "n_blocks": self.n_blocks,
            "d_state": self.d_state,
            "k_out": self.k_out,
            "m_max": self.m_max,
            "ordering": self.ordering,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


@dataclass
class EncoderModel:
    config: EncoderConfig
    params: dict[str, Tensor] = field(default_factory=dict)

    def trainable(self) -> list[Tensor]:
        return list(self.params.values())

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _linear_init(rng, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))


def init_encoder(config: EncoderConfig, seed: int = 0) -> EncoderModel:
    """Seeded parameter initialization for either encoder kind."""
    rng = np.random.default_rng(seed)
    p: dict[str, np.ndarray] = {}
    k = config.k_out
    if config.kind == "mlp":
        # Shared per-point MLP 3 -> 64 -> 128 -> K, then max-pool.
        p["mlp.w1"] = _linear_init(rng, 3, 64)
        p["mlp.b1"] = np.zeros(64)
        p["mlp.w2"] = _linear_init(rng, 64, 128)
        p["mlp.b2"] = np.zeros(128)
        p["mlp.w3"] = _linear_init(rng, 128, k)
        p["mlp.b3"] = np.zeros(k)
    else:
        d, s = config.d_model, config.d_state
        p["w_in"] = _linear_init(rng, 3, d)
        p["b_in"] = np.zeros(d)
        p["e_pos"] = rng.normal(0.0, 0.02, size=(config.m_max, d))
        for i in range(config.n_blocks):
            pre = f"blocks.{i}."
            p[pre + "norm_scale"] = np.ones(d)
            p[pre + "w_ssm_in"] = _linear_init(rng, d, d)
            p[pre + "w_gate"] = _linear_init(rng, d, d)
            p[pre + "a_log"] = np.tile(np.log(np.arange(1, s + 1, dtype=np.float64)), (d, 1))
            p[pre + "w_delta"] = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d))
            # softplus(b_delta) log-uniform in [1e-3, 1e-1], the usual dt init.
            dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=d))
            p[pre + "b_delta"] = dt + np.log(-np.expm1(-dt))
            p[pre + "w_b"] = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, s))
            p[pre + "w_c"] = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, s))
            p[pre + "skip"] = np.ones(d)
            # Residual branches start at zero: the untrained encoder is then
            # a smooth per-point map (projection + positional table + fusion)
            # and the scan's contribution grows in during training.  Keeps
            # the feature Jacobian well-behaved from the first iterations.
            p[pre + "w_out"] = np.zeros((d, d))
        p["fuse.w1"] = _linear_init(rng, d, k)
        p["fuse.b1"] = np.zeros(k)
        p["fuse.w2"] = _linear_init(rng, k, k)
        p["fuse.b2"] = np.zeros(k)
    params = {name: Tensor(arr, requires_grad=True) for name, arr in p.items()}
    return EncoderModel(config=config, params=params)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def morton_codes(points: NDArray[np.float64], bits: int = MORTON_BITS) -> NDArray[np.uint64]:
    """Morton (z-order) codes of points quantized on the normalized cube.

    Coordinates are clipped to [-1, 1] and quantized to `bits` bits per
    axis; bit b of x lands at code bit 3b, y at 3b+1, z at 3b+2.
    """
    pts = np.asarray(points, dtype=np.float64)
    res = 1 << bits
    q = np.clip(np.floor((np.clip(pts, -1.0, 1.0) + 1.0) * 0.5 * res), 0, res - 1)
    q = q.astype(np.uint64)
    codes = np.zeros(pts.shape[0], dtype=np.uint64)
    for b in range(bits):
        for axis in range(3):
            codes |= ((q[:, axis] >> np.uint64(b)) & np.uint64(1)) << np.uint64(3 * b + axis)
    return codes


def serialization_order(points: NDArray[np.float64], ordering: str) -> NDArray[np.int64]:
    """Index permutation realizing the requested point ordering."""
    n = points.shape[0]
    if ordering == "input":
        return np.arange(n, dtype=np.int64)
    if ordering == "morton":
        codes = morton_codes(points)
        # Code ties break on raw coordinates so the order is canonical for
        # any input permutation (exact duplicates are interchangeable).
        return np.lexsort((points[:, 2], points[:, 1], points[:, 0], codes)).astype(np.int64)
    raise ValueError(f"unknown ordering: {ordering!r}")


def serialize_points(
    pc: PointCloud | NDArray[np.float64],
    ordering: str = "morton",
    m_max: int | None = None,
) -> NDArray[np.float64]:
    """Deterministically ordered (N, 3) array.

    Raises TooManyPoints when m_max is given and the cloud exceeds it.
    """
    pts = pc.points if isinstance(pc, PointCloud) else np.asarray(pc, dtype=np.float64)
    if m_max is not None and pts.shape[0] > m_max:
        raise TooManyPoints(f"{pts.shape[0]} points exceeds m_max={m_max}")
    return pts[serialization_order(pts, ordering)]


# ---------------------------------------------------------------------------
# forward graphs
# ---------------------------------------------------------------------------

def _rms_norm(x: Tensor, scale: Tensor) -> Tensor:
    ms = ad.mean(ad.mul(x, x), axis=-1, keepdims=True)
    return ad.mul(ad.div(x, ad.sqrt(ad.add(ms, _RMS_EPS))), scale)


def ssm_scan(u: Tensor, delta: Tensor, a_log: Tensor, bt: Tensor, ct: Tensor, skip: Tensor) -> Tensor:
    """Input-dependent SSM recurrence, scanned sequentially over the point axis.

    u, delta: (B, N, D); bt, ct: (B, N, S); a_log: (D, S); skip: (D,).
    Per channel d: h_t = exp(delta_t * A_d) * h_{t-1} + delta_t (W_B u_t) u_{t,d};
    y_{t,d} = (W_C u_t) . h_{t,d} + skip_d u_{t,d}, with h_0 = 0.
    """
    b, n, d = u.shape
    s = a_log.shape[1]
    a = ad.neg(ad.exp(a_log))  # (D, S)
    abar = ad.exp(ad.mul(ad.reshape(delta, (b, n, d, 1)), a))  # (B, N, D, S)
    inject = ad.mul(
        ad.reshape(ad.mul(delta, u), (b, n, d, 1)), ad.reshape(bt, (b, n, 1, s))
    )  # (B, N, D, S)
    h = Tensor(np.zeros((b, d, s)))
    states = []
    for t in range(n):
        h = ad.add(ad.mul(abar[:, t], h), inject[:, t])
        states.append(h)
    hs = ad.stack(states, axis=1)  # (B, N, D, S)
    y = ad.sum_(ad.mul(hs, ad.reshape(ct, (b, n, 1, s))), axis=3)
    return ad.add(y, ad.mul(u, skip))


def mamba_block(x: Tensor, params: dict[str, Tensor], prefix: str = "") -> Tensor:
    """Residual selective-SSM block: gated scan on a normalized projection.

    x: (B, N, D) -> (B, N, D).
    """
    pre = prefix
    xn = _rms_norm(x, params[pre + "norm_scale"])
    u = ad.silu(ad.matmul(xn, params[pre + "w_ssm_in"]))
    gate = ad.silu(ad.matmul(xn, params[pre + "w_gate"]))
    delta = ad.softplus(ad.add(ad.matmul(u, params[pre + "w_delta"]), params[pre + "b_delta"]))
    bt = ad.matmul(u, params[pre + "w_b"])
    ct = ad.matmul(u, params[pre + "w_c"])
    y = ssm_scan(u, delta, params[pre + "a_log"], bt, ct, params[pre + "skip"])
    return ad.add(x, ad.matmul(ad.mul(y, gate), params[pre + "w_out"]))


def descriptor_graph(model: EncoderModel, x: Tensor) -> Tensor:
    """Descriptor from already-serialized points; x: (B, N, 3) -> (B, K)."""
    cfg = model.config
    p = model.params
    if cfg.kind == "mlp":
        h = ad.silu(ad.add(ad.matmul(x, p["mlp.w1"]), p["mlp.b1"]))
        h = ad.silu(ad.add(ad.matmul(h, p["mlp.w2"]), p["mlp.b2"]))
        h = ad.add(ad.matmul(h, p["mlp.w3"]), p["mlp.b3"])
        return ad.max_pool_over_axis(h, axis=1)
    n = x.shape[1]
    h = ad.add(ad.matmul(x, p["w_in"]), p["b_in"])
    h = ad.add(h, p["e_pos"][:n])
    for i in range(cfg.n_blocks):
        h = mamba_block(h, p, prefix=f"blocks.{i}.")
    h = ad.silu(ad.add(ad.matmul(h, p["fuse.w1"]), p["fuse.b1"]))
    h = ad.add(ad.matmul(h, p["fuse.w2"]), p["fuse.b2"])
    return ad.max_pool_over_axis(h, axis=1)


def forward_batch(model: EncoderModel, clouds: NDArray[np.float64], serialize: bool = True) -> Tensor:
    """Descriptors for a batch of equally-sized clouds; (B, N, 3) -> (B, K)."""
    pts = np.asarray(clouds, dtype=np.float64)
    if pts.ndim != 3 or pts.shape[2] != 3:
        raise ValueError(f"expected (B, N, 3), got {pts.shape}")
    if pts.shape[1] > model.config.m_max:
        raise TooManyPoints(f"{pts.shape[1]} points exceeds m_max={model.config.m_max}")
    if serialize:
        pts = np.stack(
            [c[serialization_order(c, model.config.ordering)] for c in pts], axis=0
        )
    return descriptor_graph(model, Tensor(pts))


def forward(model: EncoderModel, pc: PointCloud) -> Tensor:
    """Global descriptor of one cloud as a K-vector tensor."""
    out = forward_batch(model, pc.points[None, :, :])
    return ad.reshape(out, (model.config.k_out,))


def describe(model: EncoderModel, pc: PointCloud) -> NDArray[np.float64]:
    """Descriptor as a plain array, without building a gradient graph."""
    with ad.no_grad():
        return forward(model, pc).data


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def _as_matrix_tensor(g) -> Tensor:
    if isinstance(g, Tensor):
        return g
    if isinstance(g, RigidTransform):
        return Tensor(g.matrix())
    return Tensor(np.asarray(g, dtype=np.float64).reshape(4, 4))


def loss_total(g_est, g_gt: RigidTransform, phi_s, phi_t, lam: float = 0.001) -> Tensor:
    """Pose loss plus feature-residual regularizer.

    || G_est G_gt^-1 - I ||_F  +  lam * || phi_s - phi_t ||_2^2
    where phi_s is the descriptor of the source after the estimated
    alignment.  g_est may be a (4, 4) tensor from a differentiable chain.
    """
    est = _as_matrix_tensor(g_est)
    gt_inv = Tensor(g_gt.inverse().matrix())
    rel = ad.sub(ad.matmul(est, gt_inv), Tensor(np.eye(4)))
    l_g = ad.sqrt(ad.add(ad.sum_(ad.mul(rel, rel)), _FROBENIUS_EPS))
    ps, pt = ad.as_tensor(phi_s), ad.as_tensor(phi_t)
    diff = ad.sub(ps, pt)
    l_r = ad.sum_(ad.mul(diff, diff))
    return ad.add(l_g, ad.mul(Tensor(lam), l_r))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_encoder(model: EncoderModel, prefix) -> None:
    save_blob(prefix, {n: p.data for n, p in model.params.items()}, meta={"config": model.config.to_dict()})


def load_encoder(prefix) -> EncoderModel:
    arrays, meta = load_blob(prefix)
    config = EncoderConfig.from_dict(meta["config"])
    params = {name: Tensor(arr, requires_grad=True) for name, arr in arrays.items()}
    return EncoderModel(config=config, params=params)


def clone_model(model: EncoderModel) -> EncoderModel:
    params = {n: Tensor(p.data.copy(), requires_grad=True) for n, p in model.params.items()}
    return EncoderModel(config=replace(model.config), params=params)
