import numpy as np
import pytest

from lkreg.cloud import PointCloud
from lkreg.dataset import make_pair, orbit_cameras
from lkreg.encoders import EncoderConfig, clone_model, init_encoder
from lkreg.meshes import sphere_mesh
from lkreg.registration import LkSettings
from lkreg.se3 import sample_perturbation_at
from lkreg.training import (
    EmptyDataset,
    TrainSettings,
    batch_loss,
    evaluate_loss,
    exp_twist_graph,
    lk_forward_batch,
    train,
)

MESH = sphere_mesh(10)
CAM = orbit_cameras(MESH, 2, resolution=32)[0]
CFG = EncoderConfig(kind="mlp", k_out=12, m_max=64, ordering="input")


@pytest.fixture(scope="module")
def tiny_pair():
    d = sample_perturbation_at(10.0, 0.03, 2)
    return make_pair(MESH, CAM, 0.002, d, 2, m_points=32)


def small_settings(**kw):
    base = dict(
        epochs=1,
        batch_size=4,
        lr=1e-3,
        seed=0,
        lk=LkSettings(max_iters=2),
    )
    base.update(kw)
    return TrainSettings(**base)


def test_empty_dataset_raises():
    model = init_encoder(CFG, 0)
    with pytest.raises(EmptyDataset):
        train(model, [], small_settings())


def test_zero_lr_keeps_parameters(tiny_pair):
    model = init_encoder(CFG, 0)
    before = model.param_arrays()
    train(model, [tiny_pair], small_settings(lr=0.0, epochs=1))
    after = model.param_arrays()
    for name in before:
        np.testing.assert_array_equal(before[name], after[name])


def test_training_is_deterministic(tiny_pair):
    runs = []
    for _ in range(2):
        model = init_encoder(CFG, 0)
        _, report = train(
            model, [tiny_pair], small_settings(steps=4, augment_max_angle_deg=10.0)
        )
        runs.append(report.step_losses)
    assert runs[0] == runs[1]


def test_training_reduces_loss_smoke(tiny_pair):
    model = init_encoder(CFG, 0)
    _, report = train(
        model,
        [tiny_pair],
        small_settings(steps=30, batch_size=4, lr=3e-3, augment_max_angle_deg=10.0),
    )
    first = np.mean(report.step_losses[:5])
    last = np.mean(report.step_losses[-5:])
    assert last < first


def test_evaluate_loss_no_grad_and_positive(tiny_pair):
    model = init_encoder(CFG, 0)
    val = evaluate_loss(model, [tiny_pair], small_settings())
    assert np.isfinite(val) and val > 0
    for p in model.trainable():
        assert p.grad is None


def test_batch_loss_matches_manual_decomposition(tiny_pair):
    from lkreg import encoders as enc
    from lkreg.autodiff import no_grad

    model = init_encoder(CFG, 0)
    p_s, p_t, g_gt = tiny_pair
    lk = LkSettings(max_iters=2)
    with no_grad():
        loss = batch_loss(
            model, p_s.points[None], p_t.points[None], [g_gt], lk, lam=0.001
        ).item()
        g_chain, phi_t, g_val = lk_forward_batch(model, p_s.points[None], p_t.points[None], lk)
        rel = g_chain.data[0] @ np.linalg.inv(g_gt.matrix()) - np.eye(4)
        l_g = np.sqrt((rel * rel).sum() + 1e-30)
        aligned = p_s.points @ g_val[0, :3, :3].T + g_val[0, :3, 3]
        phi_a = enc.forward_batch(model, aligned[None]).data[0]
        l_r = ((phi_a - phi_t.data[0]) ** 2).sum()
    assert loss == pytest.approx(l_g + 0.001 * l_r, rel=1e-12)


def test_lk_forward_identical_clouds_stays_identity(tiny_pair):
    _, p_t, _ = tiny_pair
    model = init_encoder(CFG, 0)
    from lkreg.autodiff import no_grad

    with no_grad():
        g_chain, _, g_val = lk_forward_batch(
            model, p_t.points[None], p_t.points[None], LkSettings(max_iters=3)
        )
    np.testing.assert_allclose(g_val[0], np.eye(4), atol=1e-6)


def test_exp_graph_small_angle_branch():
    from lkreg.autodiff import Tensor

    xi = Tensor(np.array([[1e-12, 0.0, 0.0, 0.5, -0.2, 0.1]]))
    g = exp_twist_graph(xi)
    np.testing.assert_allclose(g.data[0, :3, :3], np.eye(3), atol=1e-11)
    np.testing.assert_allclose(g.data[0, :3, 3], [0.5, -0.2, 0.1], atol=1e-11)


def test_clone_model_detaches_storage():
    model = init_encoder(CFG, 0)
    copy = clone_model(model)
    copy.params["mlp.w1"].data[0, 0] += 1.0
    assert model.params["mlp.w1"].data[0, 0] != copy.params["mlp.w1"].data[0, 0]
