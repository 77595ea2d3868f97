import numpy as np
import pytest

from conftest import fd_check
from gvbridge import autodiff as ad
from gvbridge.autodiff import LOG_FLOOR, Tape, Tensor
from gvbridge.errors import ConfigError, ContractError, DimensionError


def test_tensor_shape_rules():
    t = Tensor([[1.0, 2.0, 3.0]])
    assert (t.rows, t.cols) == (1, 3)
    with pytest.raises(DimensionError):
        Tensor([1.0, 2.0])
    with pytest.raises(DimensionError):
        Tensor(np.zeros((0, 3)))


def test_tensor_copies_its_input():
    a = np.ones((2, 2))
    t = Tensor(a)
    a[0, 0] = 5.0
    assert t.value[0, 0] == 1.0


def test_matmul_examples():
    out = ad.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3], [4]]))
    assert out.value.tolist() == [[3.0], [4.0]]
    assert ad.matmul(Tensor([[2]]), Tensor([[5]])).value.tolist() == [[10.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))


def test_matmul_gradient(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    assert fd_check(lambda x, y: ad.sum(ad.mul(ad.matmul(x, y), ad.matmul(x, y))), [a, b]) <= 1e-6


def test_add_broadcast_row_examples():
    z = ad.add_broadcast_row(Tensor([[1, 2], [3, 4]]), Tensor([[0, 0]]))
    assert z.value.tolist() == [[1, 2], [3, 4]]
    assert ad.add_broadcast_row(Tensor([[1, 2]]), Tensor([[10, 20]])).value.tolist() == [[11, 22]]
    with pytest.raises(DimensionError):
        ad.add_broadcast_row(Tensor([[1, 2]]), Tensor([[1, 2, 3]]))
    with pytest.raises(DimensionError):
        ad.add_broadcast_row(Tensor([[1, 2]]), Tensor([[1, 2], [3, 4]]))


def test_add_broadcast_row_gradient(rng):
    a, b = rng.standard_normal((5, 3)), rng.standard_normal((1, 3))
    w = rng.standard_normal((5, 3))
    assert fd_check(lambda x, y: ad.sum(ad.mul(ad.add_broadcast_row(x, y), Tensor(w))), [a, b]) <= 1e-6


def test_relu_examples():
    assert ad.relu(Tensor([[-1, 0, 2]])).value.tolist() == [[0, 0, 2]]
    x = np.array([[0.5, 1.0, 7.0]])
    np.testing.assert_array_equal(ad.relu(Tensor(x)).value, x)


def test_relu_subgradient_at_zero_is_zero():
    tape = Tape()
    x = tape.watch([[0.0, 1.0, -1.0]])
    tape.backward(ad.sum(ad.relu(x)))
    assert tape.grad(x).tolist() == [[0.0, 1.0, 0.0]]


def test_relu_gradient_away_from_kink(rng):
    x = rng.standard_normal((4, 3))
    x[np.abs(x) < 1e-3] = 0.5
    w = rng.standard_normal((4, 3))
    assert fd_check(lambda a: ad.sum(ad.mul(ad.relu(a), Tensor(w))), [x]) <= 1e-6


def test_sigmoid_examples():
    assert ad.sigmoid(Tensor([[0.0]])).item() == 0.5
    assert abs(ad.sigmoid(Tensor([[50.0]])).item() - 1.0) <= 1e-9


def test_sigmoid_stays_inside_open_interval():
    v = ad.sigmoid(Tensor([[-1000.0, -40.0, 0.0, 40.0, 1000.0]])).value
    assert np.all(v > 0) and np.all(v < 1)


def test_sigmoid_gradient(rng):
    x = rng.standard_normal((3, 4)) * 3
    w = rng.standard_normal((3, 4))
    assert fd_check(lambda a: ad.sum(ad.mul(ad.sigmoid(a), Tensor(w))), [x]) <= 1e-6


def test_grad_reverse_examples():
    x = np.array([[1.0, 2.0, 3.0]])
    out = ad.grad_reverse(Tensor(x), 0.7)
    np.testing.assert_array_equal(out.value, x)

    tape = Tape()
    a = tape.watch([[3.0, -2.0]])
    tape.backward(ad.sum(ad.grad_reverse(a, 1.0)))
    assert tape.grad(a).tolist() == [[-1.0, -1.0]]

    tape = Tape()
    a = tape.watch([[3.0, -2.0]])
    w = Tensor([[4.0, 9.0]])
    tape.backward(ad.sum(ad.mul(ad.grad_reverse(a, 0.0), w)))
    assert np.all(tape.grad(a) == 0.0)


def test_grad_reverse_scales_by_alpha(rng):
    tape = Tape()
    a = tape.watch(rng.standard_normal((2, 3)))
    w = rng.standard_normal((2, 3))
    tape.backward(ad.sum(ad.mul(ad.grad_reverse(a, 0.3), Tensor(w))))
    np.testing.assert_array_equal(tape.grad(a), w * -0.3)


def test_grad_reverse_rejects_negative_alpha():
    with pytest.raises(ConfigError):
        ad.grad_reverse(Tensor([[1.0]]), -0.1)


def test_backward_examples():
    tape = Tape()
    x = tape.watch(np.arange(6.0).reshape(2, 3))
    tape.backward(ad.sum(x))
    assert np.all(tape.grad(x) == 1.0)

    tape = Tape()
    x = tape.watch(np.arange(6.0).reshape(2, 3))
    tape.backward(ad.sum(ad.add(x, x)))
    assert np.all(tape.grad(x) == 2.0)


def test_backward_needs_scalar_loss():
    tape = Tape()
    x = tape.watch(np.ones((2, 2)))
    with pytest.raises(ContractError):
        tape.backward(ad.relu(x))


def test_mixing_tapes_is_an_error():
    a = Tape().watch([[1.0]])
    b = Tape().watch([[2.0]])
    with pytest.raises(ContractError):
        ad.add(a, b)


def test_unreached_leaf_gets_zero_gradient():
    tape = Tape()
    x = tape.watch([[1.0, 2.0]])
    y = tape.watch([[3.0]])
    tape.backward(ad.sum(x))
    assert tape.grad(y).tolist() == [[0.0]]


def test_composite_mlp_gradient(rng):
    x = rng.standard_normal((5, 3))
    w1, b1 = rng.standard_normal((3, 4)), rng.standard_normal((1, 4))
    w2, b2 = rng.standard_normal((4, 2)), rng.standard_normal((1, 2))
    labels = np.eye(2)[[0, 1, 1, 0, 1]]

    def f(w1, b1, w2, b2):
        h = ad.relu(ad.add_broadcast_row(ad.matmul(Tensor(x), w1), b1))
        z = ad.add_broadcast_row(ad.matmul(h, w2), b2)
        return ad.scale(ad.sum(ad.mul(ad.log_softmax_rows(z), Tensor(labels))), -1.0 / 5)

    assert fd_check(f, [w1, b1, w2, b2]) <= 1e-6


@pytest.mark.parametrize(
    "op",
    [
        lambda a: ad.exp(a),
        lambda a: ad.log(ad.add_scalar(ad.abs(a), 0.5)),
        lambda a: ad.abs(a),
        lambda a: ad.softmax_rows(a),
        lambda a: ad.log_softmax_rows(a),
        lambda a: ad.scale(a, -2.5),
        lambda a: ad.sub(a, ad.mul(a, a)),
        lambda a: 1.0 - ad.sigmoid(a),
    ],
    ids=["exp", "log", "abs", "softmax", "log_softmax", "scale", "sub_mul", "rsub"],
)
def test_elementwise_gradients(rng, op):
    x = rng.standard_normal((3, 4))
    x[np.abs(x) < 1e-2] = 0.3
    w = rng.standard_normal((3, 4))
    assert fd_check(lambda a: ad.sum(ad.mul(op(a), Tensor(w))), [x]) <= 1e-4


def test_mean_gradient(rng):
    x = rng.standard_normal((4, 3))
    assert fd_check(lambda a: ad.mean(ad.mul(a, a)), [x]) <= 1e-6


def test_log_clamps_at_floor():
    v = ad.log(Tensor([[0.0, 1e-300, 1.0]])).value
    assert v[0, 0] == np.log(LOG_FLOOR) and v[0, 1] == np.log(LOG_FLOOR) and v[0, 2] == 0.0


def test_softmax_rows_sum_to_one(rng):
    p = ad.softmax_rows(Tensor(rng.standard_normal((6, 5)) * 10)).value
    assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all((p > 0) & (p < 1))


def test_detach_cuts_the_graph():
    tape = Tape()
    x = tape.watch([[2.0]])
    y = ad.mul(ad.detach(x), x)
    tape.backward(y)
    assert tape.grad(x).tolist() == [[2.0]]


def test_backward_is_deterministic(rng):
    x, w = rng.standard_normal((4, 3)), rng.standard_normal((3, 2))

    def grads():
        tape = Tape()
        a, b = tape.watch(x), tape.watch(w)
        tape.backward(ad.mean(ad.sigmoid(ad.matmul(a, b))))
        return tape.grad(a), tape.grad(b)

    g1, g2 = grads(), grads()
    for u, v in zip(g1, g2):
        assert np.array_equal(u, v)


def test_operator_sugar():
    tape = Tape()
    x = tape.watch([[1.0, 2.0]])
    y = ad.sum((x * 3.0 - 1.0) / 2.0 + (-x) + (2.0 - x))
    tape.backward(y)
    assert y.item() == pytest.approx((0.5 * 2 + (3 * 2 - 1) / 2) - 3 + (1 + 0))
    assert tape.grad(x).tolist() == [[-0.5, -0.5]]
