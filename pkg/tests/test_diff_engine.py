# test_diff_engine.py
# Reverse-mode gradients against central differences, plus the training helpers
# (Mlp, Adam, soft_update, no_grad / frozen).

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.diff_engine import (
    Adam,
    Mlp,
    Tensor,
    concat,
    finite_difference_grad,
    frozen,
    gaussian_sample,
    l1_norm,
    no_grad,
    soft_update,
)
from src.guardrails import ShapeMismatch


def _grad_of(fn, x: np.ndarray) -> np.ndarray:
    t = Tensor(x, requires_grad=True)
    fn(t).backward()
    return t.grad


def _numeric(fn, x: np.ndarray) -> np.ndarray:
    return finite_difference_grad(lambda v: fn(Tensor(v)).item(), x, h=1e-6)


CASES = {
    "add_broadcast": lambda t: (t + np.array([1.0, -2.0, 0.5])).sum(),
    "sub_reflected": lambda t: (np.ones(3) - t).square().sum(),
    "mul": lambda t: (t * t * 3.0).sum(),
    "div": lambda t: (1.0 / (t.square() + 1.0)).sum(),
    "matmul": lambda t: (t @ np.arange(12.0).reshape(3, 4)).tanh().sum(),
    "tanh": lambda t: t.tanh().sum(),
    "exp": lambda t: t.exp().mean(),
    "sqrt": lambda t: (t.square() + 1.0).sqrt().sum(),
    "index": lambda t: t[:, 1].square().sum(),
    "sum_axis": lambda t: t.sum(axis=0).square().sum(),
    "mean_keepdims": lambda t: (t - t.mean(axis=1, keepdims=True)).square().sum(),
    "concat": lambda t: concat([t, t * 2.0], axis=-1).square().sum(),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_primitive_matches_finite_differences(name):
    x = np.random.default_rng(0).normal(size=(2, 3))
    fn = CASES[name]
    analytic = _grad_of(fn, x)
    numeric = _numeric(fn, x)
    assert np.abs(analytic - numeric).max() <= 1e-4 * max(1.0, np.abs(numeric).max())


def test_relu_abs_and_clip_away_from_kinks():
    x = np.array([[-1.5, -0.4, 0.3, 2.2]])
    assert _grad_of(lambda t: t.relu().sum(), x).tolist() == [[0.0, 0.0, 1.0, 1.0]]
    assert _grad_of(lambda t: t.abs().sum(), x).tolist() == [[-1.0, -1.0, 1.0, 1.0]]
    assert _grad_of(lambda t: t.clip(-1.0, 1.0).sum(), x).tolist() == [[0.0, 1.0, 1.0, 0.0]]


def test_l1_norm_rows():
    x = Tensor([[1.0, -2.0], [0.5, 0.5]])
    assert l1_norm(x).numpy().tolist() == [3.0, 1.0]


def test_shared_subexpression_accumulates():
    # y = x * x reuses x twice: dy/dx = 2x
    x = Tensor(np.array([3.0]), requires_grad=True)
    (x * x).sum().backward()
    assert x.grad.tolist() == [6.0]


def test_gradients_accumulate_across_backward_calls():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    (x * 2.0).sum().backward()
    (x * 3.0).sum().backward()
    assert x.grad.tolist() == [5.0, 5.0]


def test_gaussian_sample_is_reparameterized():
    mean = Tensor(np.zeros((1, 2)), requires_grad=True)
    log_std = Tensor(np.zeros((1, 2)), requires_grad=True)
    noise = np.array([[0.5, -1.0]])
    sample = gaussian_sample(mean, log_std, noise)
    assert sample.numpy().tolist() == [[0.5, -1.0]]
    sample.sum().backward()
    assert mean.grad.tolist() == [[1.0, 1.0]]
    assert log_std.grad.tolist() == [[0.5, -1.0]]


def test_backward_needs_a_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeMismatch):
        (x * 2.0).backward()


def test_incompatible_shapes_are_rejected():
    with pytest.raises(ShapeMismatch):
        Tensor(np.ones((2, 3))) + Tensor(np.ones(4))


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad
    assert y.ctx is None


def test_frozen_blocks_parameter_gradients():
    rng = np.random.default_rng(1)
    net = Mlp([2, 4, 1], rng)
    x = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    with frozen(net):
        net(x).sum().backward()
    assert x.grad is not None
    assert all(p.grad is None for p in net.parameters())
    assert all(p.requires_grad for p in net.parameters())

    # the tape remembers the frozen flags even when backward runs later
    x.grad = None
    with frozen(net):
        out = net(x).sum()
    out.backward()
    assert x.grad is not None
    assert all(p.grad is None for p in net.parameters())


# -- Mlp / Adam / soft_update --

def test_mlp_parameter_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    net = Mlp([3, 5, 2], rng, output_activation="tanh")
    x = rng.normal(size=(4, 3))
    net(x).square().sum().backward()
    w = net.weights[0]

    def loss(values):
        saved = w.data
        w.data = values
        try:
            with no_grad():
                return net(x).square().sum().item()
        finally:
            w.data = saved

    numeric = finite_difference_grad(loss, w.data.copy(), h=1e-6)
    assert np.abs(w.grad - numeric).max() <= 1e-5


def test_mlp_rejects_wrong_input_width():
    net = Mlp([3, 2], np.random.default_rng(0))
    with pytest.raises(ShapeMismatch):
        net(np.zeros((1, 4)))


def test_mlp_state_dict_round_trip_and_copy():
    net = Mlp([2, 3, 1], np.random.default_rng(3))
    other = Mlp([2, 3, 1], np.random.default_rng(4))
    other.load_state_dict(net.state_dict())
    x = np.random.default_rng(5).normal(size=(6, 2))
    assert np.array_equal(net(x).numpy(), other(x).numpy())

    clone = net.copy()
    clone.weights[0].data = clone.weights[0].data + 1.0
    assert not np.array_equal(clone.weights[0].data, net.weights[0].data)

    with pytest.raises(ShapeMismatch):
        net.load_state_dict({"layers.0.weight": np.zeros((2, 3))})


def test_final_scale_shrinks_initial_outputs():
    rng_a, rng_b = np.random.default_rng(6), np.random.default_rng(6)
    small = Mlp([2, 8, 1], rng_a, final_scale=1e-2)
    plain = Mlp([2, 8, 1], rng_b)
    assert np.allclose(small.weights[-1].data, 1e-2 * plain.weights[-1].data)


def test_adam_first_step_moves_by_learning_rate():
    p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.array([3.0, -0.5])
    opt.step()
    assert p.data == pytest.approx([0.9, -0.9], abs=1e-6)


def test_adam_minimizes_a_quadratic():
    p = Tensor(np.array([5.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        ((p - 2.0).square()).sum().backward()
        opt.step()
    assert p.data[0] == pytest.approx(2.0, abs=1e-2)


def test_soft_update_interpolates():
    target = Mlp([2, 1], np.random.default_rng(7))
    online = Mlp([2, 1], np.random.default_rng(8))
    before = target.weights[0].data.copy()
    soft_update(target, online, tau=0.25)
    expected = 0.25 * online.weights[0].data + 0.75 * before
    assert np.allclose(target.weights[0].data, expected)

    soft_update(target, online, tau=1.0)
    assert np.array_equal(target.weights[0].data, online.weights[0].data)

    with pytest.raises(ValueError):
        soft_update(target, online, tau=0.0)
    with pytest.raises(ShapeMismatch):
        soft_update(target, Mlp([2, 2], np.random.default_rng(9)), tau=0.5)


if __name__ == "__main__":
    print("=" * 60)
    print("Diff engine")
    print("=" * 60)
    for case in sorted(CASES):
        test_primitive_matches_finite_differences(case)
        print(f"  {case}: ok")
    test_mlp_parameter_gradients_match_finite_differences()
    print("Mlp gradients match finite differences")
