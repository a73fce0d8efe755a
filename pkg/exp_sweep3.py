"""Scratch: eval-time step/damping screen + deeper-LK curriculum training."""
import sys
import time

import numpy as np

from lkreg import bench
from lkreg.dataset import load_dataset, split_indices
from lkreg.encoders import EncoderConfig, init_encoder, load_encoder, save_encoder
from lkreg.registration import LkSettings
from lkreg.training import TrainSettings, train

pairs = load_dataset("/tmp/ds150")
train_idx, test_idx = split_indices(len(pairs), 0.2, 0)
train_pairs = [pairs[i] for i in train_idx]
test_pairs = [pairs[i] for i in test_idx]

ecfg = EncoderConfig(kind="mamba", d_model=32, n_blocks=2, d_state=4,
                     k_out=64, m_max=128, ordering="input")


def sweep_eval(model, tag, lk):
    sw = bench.SweepConfig(methods=("iclk-mamba",), angles=(20.0, 80.0),
                           max_trans=0.1, seed=0, lk=lk)
    rows, _ = bench.run_sweep(test_pairs, {"iclk-mamba": model}, sw,
                              pair_indices=[int(i) for i in test_idx])
    for r in rows:
        print(f"  {tag} @{r.angle_deg:4.0f} rotRMSE={r.rot_rmse_deg:7.2f} "
              f"rotMed={r.rot_median_deg:7.2f} CD={r.cd_mean:8.4f}", flush=True)


mode = sys.argv[1]
if mode == "train8":
    model = init_encoder(ecfg, seed=0)
    t0 = time.perf_counter()
    # 50 epochs total, curriculum, deeper LK inside training
    for i, (n_ep, ang) in enumerate([(10, 10.0), (10, 30.0), (15, 55.0), (15, 85.0)]):
        st = TrainSettings(epochs=n_ep, batch_size=16, lr=1e-4, seed=100 + i,
                           augment_max_angle_deg=ang, augment_max_trans=0.05,
                           lk=LkSettings(max_iters=8, damping=1e-9))
        model, rep = train(model, train_pairs, st)
        print(f"phase {i} ({ang}): {rep.epoch_train_loss[0]:.4f} -> "
              f"{rep.epoch_train_loss[-1]:.4f}", flush=True)
    print(f"train8: {time.perf_counter()-t0:.0f}s", flush=True)
    save_encoder(model, "/tmp/mamba8")
    sweep_eval(model, "train8/eval-default", LkSettings(max_iters=15))
elif mode == "screen":
    model = load_encoder("/tmp/mamba8")
    for step in (0.01, 0.05, 0.1, 0.2):
        for damp in (1e-9, 1e-4):
            lk = LkSettings(max_iters=15, step_fd=step, damping=damp)
            sweep_eval(model, f"step={step} damp={damp}", lk)
    for iters in (25,):
        sweep_eval(model, f"iters={iters}", LkSettings(max_iters=iters, step_fd=0.1))
