import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import central_difference, max_relative_error
from ppgl.tensor import (
    DomainError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    backward,
    concat,
    lstm_cell,
    minimum,
    stack,
    zero_grad,
)


def loop_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i][j] += a[i][p] * b[p][j]
    return np.array(out)


# -- forward values ----------------------------------------------------------


def test_matmul_identity_and_scalar():
    b = Tensor([[3.0, 4.0], [5.0, 6.0]])
    assert np.array_equal((Tensor(np.eye(2)) @ b).data, b.data)
    assert (Tensor([[2.0]]) @ Tensor([[7.0]])).data.tolist() == [[14.0]]


def test_matmul_matches_triple_loop():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0, 6.0], [7.0, 8.0]])
    out = (Tensor(a) @ Tensor(b)).data
    assert np.array_equal(out, loop_matmul(a, b))
    assert out.tolist() == [[19.0, 22.0], [43.0, 50.0]]


def test_matmul_random_against_loop(rng):
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 5))
    np.testing.assert_allclose((Tensor(a) @ Tensor(b)).data, loop_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_elementwise_reference_values():
    assert Tensor([0.0]).tanh().data[0] == 0.0
    assert Tensor([0.0]).sigmoid().data[0] == 0.5
    e = Tensor([0.0, 1.0]).exp().data
    assert abs(e[0] - 1.0) < 1e-12 and abs(e[1] - math.e) < 1e-12
    xs = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(Tensor(xs).sigmoid().data, [1 / (1 + math.exp(-x)) for x in xs], atol=1e-15)
    np.testing.assert_allclose(Tensor(np.abs(xs) + 0.1).log().data, [math.log(abs(x) + 0.1) for x in xs])


def test_sigmoid_saturates_without_overflow():
    with np.errstate(all="raise"):
        y = Tensor([-1000.0, 1000.0]).sigmoid().data
    assert y.tolist() == [0.0, 1.0]


def test_log_domain_error():
    with pytest.raises(DomainError):
        Tensor([1.0, 0.0]).log()
    with pytest.raises(DomainError):
        Tensor([-2.0]).log()


def test_elementwise_shape_mismatch():
    with pytest.raises(ShapeError):
        Tensor(np.ones(3)) + Tensor(np.ones(2))
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) * Tensor(np.ones(3))


def test_reductions():
    assert Tensor([1.0, 2.0, 3.0]).sum().item() == 6.0
    assert Tensor([4.0, 4.0, 4.0, 4.0]).mean().item() == 4.0
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    oracle = [sum(m[i][j] for i in range(2)) for j in range(2)]
    assert Tensor(m).sum(axis=0).data.tolist() == oracle == [4.0, 6.0]
    assert Tensor(m).mean(axis=1).data.tolist() == [1.5, 3.5]


def test_reduction_bad_axis():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 2))).sum(axis=2)


def test_expand_rows_requires_vector():
    assert Tensor([1.0, 2.0]).expand_rows(3).shape == (3, 2)
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 2))).expand_rows(3)


# -- backward ----------------------------------------------------------------


def test_sum_fanout_gradient():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        loss = x.sum()
    backward(loss, tape)
    assert x.grad.tolist() == [1.0, 1.0, 1.0]


def test_tanh_gradient_at_zero():
    x = Tensor([0.0], requires_grad=True)
    with Tape() as tape:
        loss = x.tanh().sum()
    tape.backward(loss)
    assert x.grad.tolist() == [1.0]


def test_matmul_gradient_vs_finite_differences(rng):
    x = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    W = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    with Tape() as tape:
        loss = (x @ W).sum()
    tape.backward(loss)

    def f():
        return float((x.data @ W.data).sum())

    assert max_relative_error(x.grad, central_difference(f, x.data)) < 1e-4
    assert max_relative_error(W.grad, central_difference(f, W.data)) < 1e-4


def test_non_scalar_loss_rejected():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(TapeError):
        tape.backward(y)


def test_loss_not_on_tape_rejected():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = x.sum()  # recorded nowhere
    with Tape() as tape:
        pass
    with pytest.raises(TapeError):
        tape.backward(loss)


def test_nothing_recorded_outside_a_tape():
    x = Tensor([1.0], requires_grad=True)
    y = x * 3.0
    assert not y.requires_grad
    with Tape() as tape:
        x * 3.0
    assert len(tape) == 1


def test_nested_tapes_record_innermost_only():
    x = Tensor([1.0], requires_grad=True)
    with Tape() as outer:
        with Tape() as inner:
            (x * 2.0).sum()
    assert len(inner) == 2 and len(outer) == 0


def test_backward_twice_doubles_gradients(rng):
    x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    W = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = (x @ W).tanh().square().mean()
    tape.backward(loss)
    once = x.grad.copy(), W.grad.copy()
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, 2 * once[0], rtol=0, atol=0)
    np.testing.assert_allclose(W.grad, 2 * once[1], rtol=0, atol=0)
    zero_grad([x, W])
    assert x.grad is None and W.grad is None


def test_reused_leaf_accumulates_within_one_pass():
    x = Tensor([3.0], requires_grad=True)
    with Tape() as tape:
        loss = (x * x + x).sum()
    tape.backward(loss)
    assert x.grad.tolist() == [7.0]


def test_clip_gradient_only_inside_range():
    x = Tensor([-2.0, 0.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = x.clip(-1.0, 1.0).sum()
    tape.backward(loss)
    assert x.grad.tolist() == [0.0, 1.0, 0.0]


def test_minimum_tie_goes_to_first_operand():
    a = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    b = Tensor([1.0, 1.0, 4.0], requires_grad=True)
    with Tape() as tape:
        loss = minimum(a, b).sum()
    tape.backward(loss)
    assert a.grad.tolist() == [1.0, 0.0, 1.0]
    assert b.grad.tolist() == [0.0, 1.0, 0.0]


def test_fancy_index_gradient_accumulates_duplicates():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        loss = x[np.array([0, 0, 2])].sum()
    tape.backward(loss)
    assert x.grad.tolist() == [2.0, 0.0, 1.0]


# -- composite ops vs finite differences -------------------------------------

COMPOSITES = {
    "mlp_layer": lambda t: ((t["x"] @ t["W"]).tanh() * t["s"]).sum(),
    "sigmoid_div": lambda t: ((t["x"] @ t["W"]).sigmoid() / (t["s"].square() + 1.0)).mean(),
    "exp_log": lambda t: ((t["x"] @ t["W"]).exp() + 1.0).log().sum(axis=0).sum(),
    "sub_neg_T": lambda t: (-(t["x"] - t["s"].T.T) @ t["W"]).T.mean(),
    "concat_stack": lambda t: (
        concat([t["x"], t["s"]], axis=1) @ stack([t["W"][0], t["W"][1], t["W"][2], t["W"][0], t["W"][1], t["W"][2]], axis=0)
    ).tanh().sum(),
    "min_clip": lambda t: minimum(t["x"] * 2.0, t["s"].clip(-1.0, 1.0)).mean(),
    "reshape_index": lambda t: (t["x"].reshape(6)[1:5] * t["s"].reshape(6)[0:4]).sum(),
}


@pytest.mark.parametrize("name", sorted(COMPOSITES))
@settings(max_examples=15, deadline=None)
@given(
    x=arrays(np.float64, (2, 3), elements=st.floats(-2, 2)),
    s=arrays(np.float64, (2, 3), elements=st.floats(-2, 2)),
    W=arrays(np.float64, (3, 3), elements=st.floats(-2, 2)),
)
def test_composite_gradients_match_finite_differences(name, x, s, W):
    fn = COMPOSITES[name]
    if name == "min_clip":
        # keep inputs away from kinks where the one-sided derivative is undefined
        x = x + 0.1 * (np.abs(2 * x - np.clip(s, -1, 1)) < 1e-3)
        s = np.where(np.abs(np.abs(s) - 1.0) < 1e-3, 0.5, s)
    leaves = {"x": Tensor(x, requires_grad=True), "s": Tensor(s, requires_grad=True), "W": Tensor(W, requires_grad=True)}
    with Tape() as tape:
        loss = fn(leaves)
    tape.backward(loss)
    for key, leaf in leaves.items():
        numeric = central_difference(lambda: float(fn(leaves).data), leaf.data)
        analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
        assert max_relative_error(analytic, numeric) < 1e-4, key


@settings(max_examples=25, deadline=None)
@given(
    pre=arrays(np.float64, (3, 8), elements=st.floats(-2, 2)),
    c=arrays(np.float64, (3, 2), elements=st.floats(-2, 2)),
    w=arrays(np.float64, (3, 4), elements=st.floats(-2, 2)),
)
def test_fused_lstm_cell_matches_elementary_ops(pre, c, w):
    """The fused cell agrees with a composition of primitive ops in value and gradient."""
    H = 2

    def reference(p, cs):
        i = p[:, 0:H].sigmoid()
        f = p[:, H : 2 * H].sigmoid()
        g = p[:, 2 * H : 3 * H].tanh()
        o = p[:, 3 * H :].sigmoid()
        c_new = f * cs + i * g
        return concat([o * c_new.tanh(), c_new], axis=1)

    weights = Tensor(w)
    grads = []
    for fn in (lstm_cell, reference):
        p = Tensor(pre.copy(), requires_grad=True)
        cs = Tensor(c.copy(), requires_grad=True)
        with Tape() as tape:
            out = fn(p, cs)
            loss = (out * weights).sum()
        tape.backward(loss)
        grads.append((out.data, p.grad, cs.grad))
    for fused, ref in zip(*grads):
        np.testing.assert_allclose(fused, ref, rtol=1e-12, atol=1e-14)


def test_fused_lstm_cell_finite_differences(rng):
    pre = Tensor(rng.uniform(-2, 2, (2, 12)), requires_grad=True)
    c = Tensor(rng.uniform(-2, 2, (2, 3)), requires_grad=True)
    w = rng.normal(size=(2, 6))
    with Tape() as tape:
        loss = (lstm_cell(pre, c) * Tensor(w)).sum()
    tape.backward(loss)

    def f():
        return float((lstm_cell(Tensor(pre.data), Tensor(c.data)).data * w).sum())

    assert max_relative_error(pre.grad, central_difference(f, pre.data)) < 1e-4
    assert max_relative_error(c.grad, central_difference(f, c.data)) < 1e-4


def test_lstm_cell_shape_check():
    with pytest.raises(ShapeError):
        lstm_cell(Tensor(np.zeros((2, 7))), Tensor(np.zeros((2, 2))))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-2, 2)), arrays(np.float64, (4, 2), elements=st.floats(-2, 2)))
def test_forward_is_bit_identical_across_calls(x, W):
    def run():
        return ((Tensor(x) @ Tensor(W)).tanh().sum(axis=0) * 0.5).exp().mean().data

    assert run().tobytes() == run().tobytes()
