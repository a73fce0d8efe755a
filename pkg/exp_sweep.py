"""Scratch experiment: scaled-down criterion-7 rehearsal (multi-pair training)."""
import time

import numpy as np

from lkreg import bench
from lkreg.dataset import GenConfig, generate_dataset, load_dataset, split_indices
from lkreg.encoders import EncoderConfig, init_encoder
from lkreg.registration import LkSettings
from lkreg.training import TrainSettings, train

t0 = time.perf_counter()
cfg = GenConfig(mesh="bent-tube", n_pairs=60, resolution=64, m_points=96,
                noise_sigma=0.005, max_angle_deg=90.0, max_trans=0.1, seed=0)
generate_dataset("/tmp/ds60", cfg)
pairs = load_dataset("/tmp/ds60")
print(f"gen: {time.perf_counter()-t0:.0f}s")

train_idx, test_idx = split_indices(len(pairs), 0.2, 0)
train_pairs = [pairs[i] for i in train_idx]
test_pairs = [pairs[i] for i in test_idx]
print(f"split: {len(train_pairs)} train / {len(test_pairs)} test")

ecfg = EncoderConfig(kind="mamba", d_model=32, n_blocks=2, d_state=4,
                     k_out=64, m_max=128, ordering="input")
model = init_encoder(ecfg, seed=0)
t0 = time.perf_counter()
st = TrainSettings(epochs=50, batch_size=16, lr=1e-4, seed=0,
                   lk=LkSettings(max_iters=3, damping=1e-9))
model, rep = train(model, train_pairs, st)
print(f"mamba train 50ep: {time.perf_counter()-t0:.0f}s  "
      f"loss {rep.epoch_train_loss[0]:.4f} -> {rep.epoch_train_loss[-1]:.4f}")

mcfg = EncoderConfig(kind="mlp", k_out=64, m_max=128, ordering="input")
mlp = init_encoder(mcfg, seed=0)
t0 = time.perf_counter()
mlp, rep2 = train(mlp, train_pairs, st)
print(f"mlp train 50ep: {time.perf_counter()-t0:.0f}s  "
      f"loss {rep2.epoch_train_loss[0]:.4f} -> {rep2.epoch_train_loss[-1]:.4f}")

sw = bench.SweepConfig(methods=("icp", "iclk-mlp", "iclk-mamba"),
                       angles=(20.0, 40.0, 60.0, 80.0), max_trans=0.1, seed=0,
                       lk=LkSettings(max_iters=10, damping=1e-9))
t0 = time.perf_counter()
rows, recs = bench.run_sweep(test_pairs, {"iclk-mamba": model, "iclk-mlp": mlp}, sw,
                             pair_indices=[int(i) for i in test_idx])
print(f"sweep: {time.perf_counter()-t0:.0f}s")
for r in rows:
    print(f"{r.method:11s} @{r.angle_deg:4.0f}  rotRMSE={r.rot_rmse_deg:7.2f} "
          f"rotMed={r.rot_median_deg:7.2f} CD={r.cd_mean:8.4f} HD={r.hd_mean:8.4f} ms={r.mean_ms:6.1f}")
