"""Scratch: rehearse acceptance 6 and 7 configs with the new default init."""
import time

import numpy as np

from lkreg import bench
from lkreg.cloud import PointCloud
from lkreg.dataset import load_dataset, make_pair, orbit_cameras, split_indices
from lkreg.encoders import EncoderConfig, init_encoder
from lkreg.meshes import bent_tube_mesh
from lkreg.registration import LkSettings, iclk_register
from lkreg.se3 import rotation_error_deg, sample_perturbation_at, transform_points
from lkreg.training import TrainSettings, train

# --- C6 rehearsal: single-pair overfit ---
mesh = bent_tube_mesh()
cam = orbit_cameras(mesh, 4, resolution=64)[0]
pair = make_pair(mesh, cam, 0.005, sample_perturbation_at(20.0, 0.05, 7), 0, m_points=96)
cfg = EncoderConfig(kind="mamba", d_model=32, n_blocks=2, d_state=4,
                    k_out=64, m_max=128, ordering="input")
model = init_encoder(cfg, seed=0)
t0 = time.perf_counter()
st = TrainSettings(steps=350, batch_size=8, lr=1e-3, seed=0,
                   augment_max_angle_deg=25.0, augment_max_trans=0.05,
                   lk=LkSettings(max_iters=3))
model, rep = train(model, [pair], st)
print(f"C6 train: {time.perf_counter()-t0:.0f}s loss {rep.step_losses[0]:.4f} -> "
      f"{np.mean(rep.step_losses[-10:]):.4f}", flush=True)
aligned = transform_points(pair[2], pair[0].points)
errs = []
for s in range(50):
    d = sample_perturbation_at(20.0, 0.05, 1000 + s)
    src = PointCloud(transform_points(d, aligned))
    res = iclk_register(model, src, pair[1], LkSettings(max_iters=15))
    errs.append(rotation_error_deg(res.g_est, d.inverse()))
print(f"C6 median rot err @20deg over 50: {np.median(errs):.3f} (max {max(errs):.2f})", flush=True)

# --- C7 rehearsal at 150 pairs with new init ---
pairs = load_dataset("/tmp/ds150")
train_idx, test_idx = split_indices(len(pairs), 0.2, 0)
train_pairs = [pairs[i] for i in train_idx]
test_pairs = [pairs[i] for i in test_idx]
t0 = time.perf_counter()
mamba = init_encoder(cfg, seed=0)
for i, (n_ep, ang) in enumerate([(10, 10.0), (10, 30.0), (15, 55.0), (15, 85.0)]):
    stp = TrainSettings(epochs=n_ep, batch_size=16, lr=1e-4, seed=100 + i,
                        augment_max_angle_deg=ang, augment_max_trans=0.05,
                        lk=LkSettings(max_iters=3))
    mamba, _ = train(mamba, train_pairs, stp)
mcfg = EncoderConfig(kind="mlp", k_out=64, m_max=128, ordering="input")
mlp = init_encoder(mcfg, seed=0)
for i, (n_ep, ang) in enumerate([(10, 10.0), (10, 30.0), (15, 55.0), (15, 85.0)]):
    stp = TrainSettings(epochs=n_ep, batch_size=16, lr=1e-4, seed=100 + i,
                        augment_max_angle_deg=ang, augment_max_trans=0.05,
                        lk=LkSettings(max_iters=3))
    mlp, _ = train(mlp, train_pairs, stp)
print(f"C7 trains: {time.perf_counter()-t0:.0f}s", flush=True)
sw = bench.SweepConfig(methods=("icp", "iclk-mlp", "iclk-mamba"),
                       angles=(20.0, 40.0, 60.0, 80.0), max_trans=0.1, seed=0,
                       lk=LkSettings(max_iters=15))
rows, _ = bench.run_sweep(test_pairs, {"iclk-mamba": mamba, "iclk-mlp": mlp}, sw,
                          pair_indices=[int(i) for i in test_idx])
for r in rows:
    print(f"{r.method:11s} @{r.angle_deg:4.0f} rotRMSE={r.rot_rmse_deg:7.2f} "
          f"rotMed={r.rot_median_deg:7.2f} CD={r.cd_mean:8.4f} HD={r.hd_mean:8.4f}", flush=True)
