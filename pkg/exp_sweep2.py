"""Scratch: does an augmentation curriculum fix mamba training at lr 1e-4?"""
import sys
import time

import numpy as np

from lkreg import bench
from lkreg.dataset import GenConfig, generate_dataset, load_dataset, split_indices
from lkreg.encoders import EncoderConfig, init_encoder
from lkreg.registration import LkSettings
from lkreg.training import TrainSettings, train

t0 = time.perf_counter()
cfg = GenConfig(mesh="bent-tube", n_pairs=150, resolution=64, m_points=96,
                noise_sigma=0.005, max_angle_deg=90.0, max_trans=0.1, seed=0)
generate_dataset("/tmp/ds150", cfg)
pairs = load_dataset("/tmp/ds150")
print(f"gen: {time.perf_counter()-t0:.0f}s", flush=True)

train_idx, test_idx = split_indices(len(pairs), 0.2, 0)
train_pairs = [pairs[i] for i in train_idx]
test_pairs = [pairs[i] for i in test_idx]

ecfg = EncoderConfig(kind="mamba", d_model=32, n_blocks=2, d_state=4,
                     k_out=64, m_max=128, ordering="input")

def sweep_eval(model, tag):
    sw = bench.SweepConfig(methods=("iclk-mamba",), angles=(20.0, 80.0),
                           max_trans=0.1, seed=0,
                           lk=LkSettings(max_iters=15, damping=1e-9))
    rows, _ = bench.run_sweep(test_pairs, {"iclk-mamba": model}, sw,
                              pair_indices=[int(i) for i in test_idx])
    for r in rows:
        print(f"  {tag} @{r.angle_deg:4.0f}  rotRMSE={r.rot_rmse_deg:7.2f} "
              f"rotMed={r.rot_median_deg:7.2f} CD={r.cd_mean:8.4f}", flush=True)

variant = sys.argv[1] if len(sys.argv) > 1 else "curriculum"
model = init_encoder(ecfg, seed=0)
t0 = time.perf_counter()
if variant == "curriculum":
    phases = [(15, 10.0), (15, 30.0), (20, 85.0)]
    for i, (n_ep, ang) in enumerate(phases):
        st = TrainSettings(epochs=n_ep, batch_size=16, lr=1e-4, seed=100 + i,
                           augment_max_angle_deg=ang, augment_max_trans=0.05,
                           lk=LkSettings(max_iters=3, damping=1e-9))
        model, rep = train(model, train_pairs, st)
        print(f"phase {i} ({ang}deg): loss {rep.epoch_train_loss[0]:.4f} -> "
              f"{rep.epoch_train_loss[-1]:.4f}", flush=True)
else:
    st = TrainSettings(epochs=50, batch_size=16, lr=1e-4, seed=100,
                       lk=LkSettings(max_iters=3, damping=1e-9))
    model, rep = train(model, train_pairs, st)
    print(f"plain: loss {rep.epoch_train_loss[0]:.4f} -> {rep.epoch_train_loss[-1]:.4f}", flush=True)
print(f"train: {time.perf_counter()-t0:.0f}s", flush=True)
sweep_eval(model, variant)
