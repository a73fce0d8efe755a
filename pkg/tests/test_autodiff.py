import math

import numpy as np
import pytest

from lkreg import autodiff as ad
from lkreg.autodiff import NotScalar, ShapeMismatch, Tensor
from lkreg.optim import AdamState, adam_step


def fd_gradient(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued fn at x."""
    g = np.zeros_like(x)
    flat = g.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        xp = x.copy().reshape(-1)
        xm = x.copy().reshape(-1)
        xp[i] += h
        xm[i] -= h
        flat[i] = (fn(xp.reshape(x.shape)) - fn(xm.reshape(x.shape))) / (2 * h)
    return g


def check_gradient(build, x0: np.ndarray, rel_tol: float = 1e-4) -> None:
    """build(tensor) -> scalar tensor; compares backward vs central FD."""
    leaf = Tensor(x0, requires_grad=True)
    loss = build(leaf)
    ad.backward(loss)
    analytic = leaf.grad
    numeric = fd_gradient(lambda x: build(Tensor(x)).item(), x0)
    scale = max(float(np.abs(numeric).max()), 1e-8)
    assert analytic is not None
    np.testing.assert_allclose(analytic, numeric, atol=rel_tol * scale)


RNG = np.random.default_rng(0)


def test_matmul_value_hand_case():
    a = Tensor(np.arange(6.0).reshape(2, 3))
    b = Tensor(np.arange(12.0).reshape(3, 4))
    out = ad.matmul(a, b)
    assert out.shape == (2, 4)
    np.testing.assert_array_equal(out.data, a.data @ b.data)


def test_analytic_point_values():
    assert ad.silu(Tensor(0.0)).item() == 0.0
    assert ad.softplus(Tensor(0.0)).item() == pytest.approx(math.log(2.0), abs=1e-15)
    assert ad.sigmoid(Tensor(0.0)).item() == 0.5
    assert ad.tanh(Tensor(0.0)).item() == 0.0


@pytest.mark.parametrize(
    "name,build",
    [
        ("add", lambda x: ad.sum_(ad.add(x, 2.0 * x))),
        ("sub", lambda x: ad.sum_(ad.sub(x, ad.mul(x, x)))),
        ("mul", lambda x: ad.sum_(ad.mul(x, ad.add(x, 1.0)))),
        ("div", lambda x: ad.sum_(ad.div(x, ad.add(ad.mul(x, x), 2.0)))),
        ("neg", lambda x: ad.sum_(ad.neg(ad.mul(x, x)))),
        ("pow", lambda x: ad.sum_(ad.pow_const(ad.add(ad.mul(x, x), 1.0), 1.5))),
        ("exp", lambda x: ad.sum_(ad.exp(x))),
        ("log", lambda x: ad.sum_(ad.log(ad.add(ad.mul(x, x), 1.5)))),
        ("sqrt", lambda x: ad.sum_(ad.sqrt(ad.add(ad.mul(x, x), 0.7)))),
        ("sin", lambda x: ad.sum_(ad.sin(x))),
        ("cos", lambda x: ad.sum_(ad.cos(x))),
        ("tanh", lambda x: ad.sum_(ad.tanh(x))),
        ("sigmoid", lambda x: ad.sum_(ad.sigmoid(x))),
        ("softplus", lambda x: ad.sum_(ad.softplus(x))),
        ("silu", lambda x: ad.sum_(ad.silu(x))),
        ("mean", lambda x: ad.mean(ad.mul(x, x))),
        ("sum_axis", lambda x: ad.sum_(ad.mul(ad.sum_(x, axis=0), ad.sum_(x, axis=0)))),
        ("transpose", lambda x: ad.sum_(ad.mul(ad.transpose(x), ad.transpose(x)))),
        ("reshape", lambda x: ad.sum_(ad.mul(ad.reshape(x, (6,)), ad.reshape(x, (6,))))),
        ("slice", lambda x: ad.sum_(ad.mul(x[0, :], x[1, :]))),
        ("maxpool", lambda x: ad.sum_(ad.max_pool_over_axis(ad.mul(x, x), axis=1))),
    ],
)
def test_primitive_gradients_match_fd(name, build):
    x0 = RNG.normal(size=(2, 3))
    check_gradient(build, x0)


def test_matmul_gradients_match_fd():
    b0 = RNG.normal(size=(3, 2))

    def build(x):
        y = ad.matmul(x, Tensor(b0))
        return ad.sum_(ad.mul(y, y))

    check_gradient(build, RNG.normal(size=(4, 3)))


def test_batched_matmul_gradients():
    b0 = RNG.normal(size=(2, 3, 2))

    def build(x):
        y = ad.matmul(x, Tensor(b0))
        return ad.sum_(ad.mul(y, y))

    check_gradient(build, RNG.normal(size=(2, 4, 3)))


def test_concat_stack_where_broadcast_gradients():
    def build_concat(x):
        y = ad.concat([x, ad.mul(x, x)], axis=1)
        return ad.sum_(ad.mul(y, y))

    check_gradient(build_concat, RNG.normal(size=(2, 2)))

    def build_stack(x):
        y = ad.stack([x[0], x[1], ad.mul(x[0], x[1])], axis=0)
        return ad.sum_(ad.mul(y, y))

    check_gradient(build_stack, RNG.normal(size=(2, 3)))

    mask = np.array([[True, False, True], [False, True, False]])

    def build_where(x):
        y = ad.where(mask, ad.mul(x, 2.0), ad.mul(x, x))
        return ad.sum_(y)

    check_gradient(build_where, RNG.normal(size=(2, 3)))

    def build_bcast(x):
        y = ad.broadcast_to(x, (4, 2, 3))
        return ad.sum_(ad.mul(y, y))

    check_gradient(build_bcast, RNG.normal(size=(2, 3)))


def test_composed_scalar_function_fd():
    def build(x):
        y = ad.silu(ad.matmul(x, ad.transpose(x)))
        z = ad.softplus(ad.mean(y, axis=1))
        return ad.sum_(ad.mul(z, ad.sin(z)))

    check_gradient(build, RNG.normal(size=(3, 3)))


def test_backward_sum_gives_ones():
    w = Tensor(RNG.normal(size=(4,)), requires_grad=True)
    ad.backward(ad.sum_(w))
    np.testing.assert_array_equal(w.grad, np.ones(4))


def test_backward_squared_norm_gives_2w():
    w = Tensor(RNG.normal(size=(5,)), requires_grad=True)
    ad.backward(ad.sum_(ad.mul(w, w)))
    np.testing.assert_allclose(w.grad, 2 * w.data, atol=1e-15)


def test_gradient_accumulates_across_uses():
    w = Tensor(np.array([3.0]), requires_grad=True)
    loss = ad.add(ad.mul(w, w), ad.mul(2.0, w))  # w^2 + 2w -> 2w + 2
    ad.backward(loss)
    np.testing.assert_allclose(w.grad, [8.0], atol=1e-15)


def test_gradient_accumulates_across_backward_calls():
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    ad.backward(ad.sum_(w))
    ad.backward(ad.sum_(w))
    np.testing.assert_array_equal(w.grad, [2.0, 2.0])


def test_backward_deterministic_bitwise():
    def run():
        w = Tensor(np.linspace(-1, 1, 12).reshape(3, 4), requires_grad=True)
        y = ad.silu(ad.matmul(w, ad.transpose(w)))
        ad.backward(ad.sum_(ad.mul(y, ad.sigmoid(y))))
        return w.grad.copy()

    a, b = run(), run()
    np.testing.assert_array_equal(a, b)


def test_maxpool_tie_breaks_lowest_index():
    x = Tensor(np.array([[1.0, 3.0, 3.0, 2.0]]), requires_grad=True)
    ad.backward(ad.sum_(ad.max_pool_over_axis(x, axis=1)))
    np.testing.assert_array_equal(x.grad, [[0.0, 1.0, 0.0, 0.0]])


def test_maxpool_single_position_per_output():
    x = Tensor(RNG.normal(size=(3, 7)), requires_grad=True)
    ad.backward(ad.sum_(ad.max_pool_over_axis(x, axis=1)))
    assert (np.count_nonzero(x.grad, axis=1) == 1).all()


def test_not_scalar_raises():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(NotScalar):
        ad.backward(ad.mul(w, w))


def test_shape_mismatch_raises():
    with pytest.raises(ShapeMismatch):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    with pytest.raises(ShapeMismatch):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


def test_no_grad_blocks_graph():
    w = Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = ad.mul(w, w)
    assert y._parents == () and not y.requires_grad


def test_tape_topological_order():
    w = Tensor(np.ones(2), requires_grad=True)
    a = ad.mul(w, w)
    b = ad.add(a, w)
    loss = ad.sum_(ad.mul(b, a))
    tape = ad.Tape(loss)
    pos = {id(n): i for i, n in enumerate(tape.nodes)}
    for node in tape.nodes:
        for parent in node._parents:
            if id(parent) in pos:
                assert pos[id(parent)] < pos[id(node)]


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    state = AdamState.init([p], lr=1e-2)
    adam_step([p], [np.zeros(2)], state)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_single_step_matches_hand_execution():
    # One step, g = 1, lr = 1e-4: m_hat = 1, v_hat = 1, step = lr / (1 + eps)
    p = Tensor(np.array([0.5]), requires_grad=True)
    state = AdamState.init([p], lr=1e-4)
    adam_step([p], [np.ones(1)], state)
    expected = 0.5 - 1e-4 * 1.0 / (1.0 + 1e-8)
    assert p.data[0] == pytest.approx(expected, abs=1e-18)


def test_adam_quadratic_loss_decreases():
    p = Tensor(np.array([3.0, -4.0]), requires_grad=True)
    state = AdamState.init([p], lr=1e-2)
    losses = []
    for _ in range(100):
        g = 2.0 * p.data
        losses.append(float((p.data**2).sum()))
        adam_step([p], [g], state)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_adam_shape_mismatch():
    p = Tensor(np.ones(3), requires_grad=True)
    state = AdamState.init([p])
    with pytest.raises(ShapeMismatch):
        adam_step([p], [np.ones(4)], state)
