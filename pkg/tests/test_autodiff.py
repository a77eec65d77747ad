"""Finite-difference checks for every tape operation."""

import numpy as np
import pytest

from tsalign import autodiff as ad


def numeric_grad(f, x, eps=1e-6):
    """Central differences of scalar-valued f at array x."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def check_op(build, *shapes, seed=0, tol=1e-7):
    """Compare analytic and numeric gradients of sum(op(inputs))."""
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=s) for s in shapes]
    tensors = [ad.Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(*tensors)
    loss = ad.tensor_sum(ad.mul(out, out))
    ad.backward(loss)
    for k, (arr, t) in enumerate(zip(arrays, tensors)):
        def f(x, k=k):
            ins = [ad.Tensor(a) for a in arrays]
            ins[k] = ad.Tensor(x)
            o = build(*ins)
            return float(ad.tensor_sum(ad.mul(o, o)).data)

        num = numeric_grad(f, arr.copy())
        assert t.grad is not None
        err = np.max(np.abs(t.grad - num)) / max(1.0, np.max(np.abs(num)))
        assert err < tol, f"input {k}: max deviation {err:.2e}"


def test_add_broadcast():
    check_op(ad.add, (3, 4), (4,))


def test_sub_broadcast():
    check_op(ad.sub, (2, 3, 4), (3, 1))


def test_mul_broadcast():
    check_op(ad.mul, (3, 4), (3, 1))


def test_matmul_plain():
    check_op(ad.matmul, (3, 4), (4, 5))


def test_matmul_batched():
    check_op(ad.matmul, (2, 3, 4), (4, 5))


def test_matmul_broadcast_batch():
    # [B, h, K, d] @ [h, d, M] broadcasts over the leading batch axis
    check_op(ad.matmul, (2, 3, 4, 5), (3, 5, 6))


def test_reshape_swapaxes():
    check_op(lambda a: ad.swapaxes(ad.reshape(a, (2, 3, 2, 2)), 1, 2), (2, 12))


def test_slice():
    check_op(lambda a: a[:, 1:3], (4, 5))


def test_concat():
    check_op(lambda a, b: ad.concat([a, b], axis=0), (2, 3), (4, 3))


def test_sum_axis():
    check_op(lambda a: ad.tensor_sum(a, axis=1), (3, 4))


def test_mean_all():
    check_op(lambda a: ad.tensor_mean(a), (3, 4))


def test_mean_axis_keepdims():
    check_op(lambda a: ad.tensor_mean(a, axis=-1, keepdims=True), (3, 4))


def test_softmax():
    check_op(lambda a: ad.softmax(a, axis=-1), (3, 5), tol=1e-6)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(1)
    y = ad.softmax(ad.Tensor(rng.normal(size=(4, 7)) * 10)).data
    assert np.allclose(y.sum(axis=-1), 1.0, atol=1e-12)


def test_gelu():
    check_op(ad.gelu, (3, 4), tol=1e-6)


def test_layer_norm():
    check_op(lambda a, g, b: ad.layer_norm(a, g, b), (3, 4, 6), (6,), (6,), tol=1e-6)


def test_repeated_parent_accumulates():
    x = ad.Tensor(np.array([2.0, 3.0]), requires_grad=True)
    y = ad.mul(x, x)  # same tensor twice
    ad.backward(ad.tensor_sum(y))
    assert np.allclose(x.grad, [4.0, 6.0])


def test_constant_subgraph_is_leaf():
    a = ad.Tensor(np.ones((2, 2)))
    b = ad.Tensor(np.ones((2, 2)))
    out = ad.matmul(a, b)
    assert not out.requires_grad and out._parents == ()


def test_grad_flows_through_frozen_factor():
    # frozen weight: no grad accumulated on it, but upstream input still gets one
    x = ad.Tensor(np.ones((1, 3)), requires_grad=True)
    w = ad.Tensor(np.eye(3))
    out = ad.matmul(x, w)
    ad.backward(ad.tensor_sum(out))
    assert w.grad is None
    assert np.allclose(x.grad, 1.0)


def test_backward_rejects_non_scalar():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        ad.backward(ad.mul(x, x))


def test_diamond_graph_order():
    # z = (x*x) + (x*x * 2); both branches must contribute before x is read
    x = ad.Tensor(np.array([3.0]), requires_grad=True)
    sq = ad.mul(x, x)
    z = ad.add(sq, ad.mul(sq, ad.as_tensor(2.0)))
    ad.backward(ad.tensor_sum(z))
    assert np.allclose(x.grad, 18.0)  # d/dx 3x^2 = 6x
