import math

import mpmath
import numpy as np
import pytest

from convemo import autodiff as ad
from convemo.autodiff import (
    DimensionError,
    NonFiniteError,
    Tape,
    Tensor,
    UsageError,
    check_gradients,
)


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(ad.matmul(a, b).data, [[1.0, 2.0], [3.0, 4.0]])


def test_matmul_projection():
    a = Tensor([[1.0, 0.0], [0.0, 0.0]])
    b = Tensor([[5.0], [7.0]])
    assert np.array_equal(ad.matmul(a, b).data, [[5.0], [0.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_sum_gradient_is_row_sums():
    # d sum(AB) / dA = broadcast of B's row sums; checked against central
    # finite differences with h=1e-6.
    rng = np.random.Generator(np.random.PCG64(0))
    a = Tensor(rng.normal(size=(3, 4)))
    b = Tensor(rng.normal(size=(4, 2)))

    def loss():
        return ad.sum_all(ad.matmul(a, b))

    result = check_gradients(loss, [("a", a), ("b", b)], h=1e-6, rel_tol=1e-4)
    assert result.passed, result.worst
    a.grad = b.grad = None
    with Tape() as tape:
        tape.backward(loss())
    row_sums = b.data.sum(axis=1)
    assert np.allclose(a.grad, np.tile(row_sums, (3, 1)), atol=1e-12)


def test_concat_basic_and_single():
    out = ad.concat([Tensor([1.0, 2.0]), Tensor([3.0])])
    assert np.array_equal(out.data, [[1.0, 2.0, 3.0]])
    single = ad.concat([Tensor([4.0, 5.0])])
    assert np.array_equal(single.data, [[4.0, 5.0]])


def test_concat_empty_is_usage_error():
    with pytest.raises(UsageError):
        ad.concat([])


def test_concat_gradient_splits_ones():
    a = Tensor([1.0, 2.0])
    b = Tensor([3.0, 4.0, 5.0])
    with Tape() as tape:
        loss = ad.sum_all(ad.concat([a, b]))
        tape.backward(loss)
    assert np.array_equal(a.grad, np.ones((1, 2)))
    assert np.array_equal(b.grad, np.ones((1, 3)))
    result = check_gradients(lambda: ad.sum_all(ad.concat([a, b])),
                             [("a", a), ("b", b)], h=1e-6)
    assert result.passed


def test_elementwise_values():
    zeros = Tensor(np.zeros((1, 4)))
    assert np.array_equal(ad.tanh(zeros).data, np.zeros((1, 4)))
    assert np.array_equal(ad.sigmoid(zeros).data, np.full((1, 4), 0.5))


def test_tanh_gradient_at_point():
    x = Tensor([[0.3]])
    with Tape() as tape:
        tape.backward(ad.tanh(x))
    expected = 1.0 - math.tanh(0.3) ** 2
    assert abs(x.grad[0, 0] - expected) < 1e-12
    result = check_gradients(lambda: ad.tanh(x), [("x", x)], h=1e-6)
    assert result.passed


def test_binary_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.add(Tensor(np.ones((1, 2))), Tensor(np.ones((1, 3))))
    with pytest.raises(DimensionError):
        ad.mul(Tensor(np.ones((2, 2))), Tensor(np.ones((1, 2))))


def test_softmax_symmetry():
    out = ad.softmax(Tensor([0.0, 0.0, 0.0]))
    assert np.allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-15)


def test_softmax_large_logits_no_overflow():
    out = ad.softmax(Tensor([1000.0, 0.0]))
    assert np.isfinite(out.data).all()
    assert out.data[0, 0] > 1.0 - 1e-12
    assert out.data[0, 1] < 1e-12


def test_softmax_matches_extended_precision():
    # Oracle: direct exp / sum(exp) at 50 decimal digits.
    logits = [1.0, 2.0, 3.0]
    with mpmath.workdps(50):
        exps = [mpmath.exp(v) for v in logits]
        total = mpmath.fsum(exps)
        expected = [float(v / total) for v in exps]
    out = ad.softmax(Tensor(logits))
    assert np.allclose(out.data[0], expected, rtol=0, atol=1e-15)


def test_softmax_sums_to_one_and_shift_invariant():
    rng = np.random.Generator(np.random.PCG64(1))
    for _ in range(50):
        x = rng.normal(scale=5.0, size=8)
        a = ad.softmax(Tensor(x)).data
        b = ad.softmax(Tensor(x + 17.25)).data
        assert abs(a.sum() - 1.0) < 1e-9
        assert np.abs(a - b).max() < 1e-9


def test_cross_entropy_uniform_logits():
    loss = ad.cross_entropy(Tensor([0.0, 0.0, 0.0, 0.0]), 2)
    assert abs(loss.data[0, 0] - math.log(4)) < 1e-12


def test_cross_entropy_confident_logit():
    loss = ad.cross_entropy(Tensor([50.0, 0.0, 0.0]), 0)
    assert loss.data[0, 0] < 1e-12


def test_cross_entropy_label_range():
    with pytest.raises(UsageError):
        ad.cross_entropy(Tensor([0.0, 0.0]), 2)
    with pytest.raises(UsageError):
        ad.cross_entropy(Tensor([0.0, 0.0]), -1)


def test_cross_entropy_backward_is_probs_minus_onehot():
    x = Tensor([0.4, -1.2, 2.0])
    with Tape() as tape:
        tape.backward(ad.cross_entropy(x, 1))
    probs = ad.softmax(Tensor([0.4, -1.2, 2.0])).data
    expected = probs.copy()
    expected[0, 1] -= 1.0
    assert np.allclose(x.grad, expected, atol=1e-12)


def test_backward_sum_gives_ones():
    w = Tensor(np.arange(6.0).reshape(2, 3))
    with Tape() as tape:
        tape.backward(ad.sum_all(w))
    assert np.array_equal(w.grad, np.ones((2, 3)))


def test_backward_half_square_norm_gives_w():
    rng = np.random.Generator(np.random.PCG64(2))
    w = Tensor(rng.normal(size=(3, 3)))
    with Tape() as tape:
        tape.backward(ad.scale(ad.sum_all(ad.mul(w, w)), 0.5))
    assert np.allclose(w.grad, w.data, atol=1e-12)


def test_backward_requires_scalar():
    w = Tensor(np.ones((1, 3)))
    with Tape() as tape:
        out = ad.tanh(w)
        with pytest.raises(UsageError):
            tape.backward(out)


def test_backward_requires_loss_on_tape():
    w = Tensor(np.ones((1, 3)))
    with Tape():
        loss = ad.sum_all(w)
    with Tape() as other:
        with pytest.raises(UsageError):
            other.backward(loss)


def test_gradient_accumulation_two_branches():
    w = Tensor([1.0, 2.0, 3.0])
    with Tape() as tape:
        tape.backward(ad.add(ad.sum_all(w), ad.sum_all(w)))
    assert np.array_equal(w.grad, np.full((1, 3), 2.0))


def test_non_finite_is_error_state():
    with pytest.raises(NonFiniteError):
        Tensor([np.inf, 1.0])
    huge = Tensor([[1e200]])
    with np.errstate(over="ignore"):
        with pytest.raises(NonFiniteError):
            ad.mul(ad.scale(huge, 1e200), ad.scale(huge, 1e200))


def test_ops_without_tape_are_plain_forward():
    out = ad.tanh(Tensor([0.5]))
    assert out.grad is None  # nothing recorded, nothing to backprop


def test_every_op_passes_finite_difference_sweep():
    # Engine-wide invariant: analytic vs central differences within 1e-4
    # relative error on randomized small shapes.
    rng = np.random.Generator(np.random.PCG64(3))

    def make(shape):
        return Tensor(rng.normal(size=shape))

    cases = []
    a, b = make((2, 3)), make((3, 2))
    cases.append(("matmul", [("a", a), ("b", b)],
                  lambda: ad.sum_all(ad.tanh(ad.matmul(a, b)))))
    t = make((2, 4))
    cases.append(("transpose", [("t", t)],
                  lambda: ad.sum_all(ad.tanh(ad.transpose(t)))))
    p1, p2, p3 = make((1, 2)), make((1, 3)), make((1, 1))
    cases.append(("concat", [("p1", p1), ("p2", p2), ("p3", p3)],
                  lambda: ad.sum_all(ad.tanh(ad.concat([p1, p2, p3])))))
    r1, r2 = make((1, 3)), make((1, 3))
    cases.append(("vstack", [("r1", r1), ("r2", r2)],
                  lambda: ad.sum_all(ad.sigmoid(ad.vstack([r1, r2])))))
    u, v = make((2, 3)), make((2, 3))
    cases.append(("mul+add+scale", [("u", u), ("v", v)],
                  lambda: ad.sum_all(ad.scale(ad.add(ad.mul(u, v), u), 1.7))))
    s = make((1, 5))
    cases.append(("softmax", [("s", s)],
                  lambda: ad.sum_all(ad.mul(ad.softmax(s), s))))
    c = make((1, 4))
    cases.append(("cross_entropy", [("c", c)], lambda: ad.cross_entropy(c, 2)))

    for name, tensors, loss in cases:
        result = check_gradients(loss, tensors, h=1e-5, rel_tol=1e-4)
        assert result.passed, f"{name}: {result.worst}"


def test_fault_injection_breaks_gradients():
    rng = np.random.Generator(np.random.PCG64(4))
    x = Tensor(rng.normal(size=(1, 4)))

    def loss():
        return ad.sum_all(ad.tanh(x))

    assert check_gradients(loss, [("x", x)]).passed
    with ad.inject_backward_fault("tanh"):
        assert not check_gradients(loss, [("x", x)]).passed
