"""Scratch experiment: which knobs make single-pair LK overfit work."""
import time

import numpy as np

from lkreg.cloud import PointCloud
from lkreg.dataset import make_pair, orbit_cameras
from lkreg.encoders import EncoderConfig, init_encoder
from lkreg.meshes import bent_tube_mesh
from lkreg.registration import LkSettings, iclk_register
from lkreg.se3 import rotation_error_deg, sample_perturbation_at, transform_points
from lkreg.training import TrainSettings, train

mesh = bent_tube_mesh()
cam = orbit_cameras(mesh, 4, resolution=64)[0]
perturb = sample_perturbation_at(20.0, 0.05, 7)
ps, pt, gt = make_pair(mesh, cam, 0.0, perturb, 0, m_points=96)
aligned = PointCloud(transform_points(gt, ps.points))


def eval_at(model, angle, damping, n=20, iters=10):
    errs = []
    for s in range(n):
        d = sample_perturbation_at(angle, 0.05, 1000 + s)
        src = PointCloud(transform_points(d, aligned.points))
        res = iclk_register(model, src, pt, LkSettings(max_iters=iters, damping=damping))
        errs.append(rotation_error_deg(res.g_est, d.inverse()))
    return float(np.median(errs)), float(np.mean(errs)), float(np.max(errs))


def run(tag, ordering, damping, curriculum, lr_decay, steps=300, lr=1e-3, batch=8):
    cfg = EncoderConfig(kind="mamba", d_model=32, n_blocks=2, d_state=4,
                        k_out=64, m_max=128, ordering=ordering)
    model = init_encoder(cfg, seed=0)
    t0 = time.perf_counter()
    phases = curriculum if curriculum else [(steps, 25.0)]
    done = 0
    for i, (n_steps, ang) in enumerate(phases):
        cur_lr = lr * (lr_decay ** i)
        st = TrainSettings(steps=n_steps, batch_size=batch, lr=cur_lr, seed=100 + i,
                           augment_max_angle_deg=ang, augment_max_trans=0.05,
                           lk=LkSettings(max_iters=3, damping=damping))
        model, rep = train(model, [(ps, pt, gt)], st)
        done += n_steps
    med, mean, worst = eval_at(model, 20.0, damping)
    print(f"{tag:28s} steps={done} {time.perf_counter()-t0:5.0f}s  "
          f"med={med:6.2f} mean={mean:6.2f} max={worst:6.2f}")
    return model


run("B input damp1e-9", "input", 1e-9, None, 1.0)
run("C morton damp1e-3", "morton", 1e-3, None, 1.0)
run("D input damp1e-3 curr", "input", 1e-3, [(100, 5.0), (100, 15.0), (100, 25.0)], 0.5)
run("E morton damp1e-3 curr", "morton", 1e-3, [(100, 5.0), (100, 15.0), (100, 25.0)], 0.5)
