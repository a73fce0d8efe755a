"""Scratch: zero-init of the block output projection -> smooth start."""
import time

import numpy as np

from lkreg import bench
from lkreg.dataset import load_dataset, split_indices
from lkreg.encoders import EncoderConfig, init_encoder, save_encoder
from lkreg.registration import LkSettings
from lkreg.training import TrainSettings, train

pairs = load_dataset("/tmp/ds150")
train_idx, test_idx = split_indices(len(pairs), 0.2, 0)
train_pairs = [pairs[i] for i in train_idx]
test_pairs = [pairs[i] for i in test_idx]

ecfg = EncoderConfig(kind="mamba", d_model=32, n_blocks=2, d_state=4,
                     k_out=64, m_max=128, ordering="input")
model = init_encoder(ecfg, seed=0)
for i in range(ecfg.n_blocks):
    model.params[f"blocks.{i}.w_out"].data = np.zeros_like(
        model.params[f"blocks.{i}.w_out"].data)

t0 = time.perf_counter()
for i, (n_ep, ang) in enumerate([(10, 10.0), (10, 30.0), (15, 55.0), (15, 85.0)]):
    st = TrainSettings(epochs=n_ep, batch_size=16, lr=1e-4, seed=100 + i,
                       augment_max_angle_deg=ang, augment_max_trans=0.05,
                       lk=LkSettings(max_iters=3, damping=1e-9))
    model, rep = train(model, train_pairs, st)
    print(f"phase {i} ({ang}): {rep.epoch_train_loss[0]:.4f} -> "
          f"{rep.epoch_train_loss[-1]:.4f}", flush=True)
print(f"train: {time.perf_counter()-t0:.0f}s", flush=True)
# confirm the SSM path woke up
w = model.params["blocks.0.w_out"].data
print("w_out norm after training:", np.abs(w).max(), flush=True)
save_encoder(model, "/tmp/mamba_zi")

sw = bench.SweepConfig(methods=("iclk-mamba",), angles=(20.0, 40.0, 60.0, 80.0),
                       max_trans=0.1, seed=0, lk=LkSettings(max_iters=15))
rows, _ = bench.run_sweep(test_pairs, {"iclk-mamba": model}, sw,
                          pair_indices=[int(i) for i in test_idx])
for r in rows:
    print(f"zi @{r.angle_deg:4.0f} rotRMSE={r.rot_rmse_deg:7.2f} "
          f"rotMed={r.rot_median_deg:7.2f} CD={r.cd_mean:8.4f}", flush=True)
