import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hgnn import autodiff as ad
from hgnn.errors import ValidationError


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


def check(fn, *shapes, seed=0, positive=False, tol=1e-7):
    """Compare tape gradients of sum(fn(*args)) with central differences, argument by argument."""
    rng = np.random.default_rng(seed)
    args = [rng.uniform(0.5, 2.0, s) if positive else rng.standard_normal(s) for s in shapes]
    leaves = [ad.leaf(a) for a in args]
    out = ad.total(fn(*leaves))
    out.backward()
    for k, a in enumerate(args):
        def f(x, k=k):
            vals = list(args)
            vals[k] = x
            return float(np.sum(fn(*vals)))
        np.testing.assert_allclose(leaves[k].grad, numeric_grad(f, a), atol=tol, rtol=tol)


@pytest.mark.parametrize(
    "name,fn,shapes,positive",
    [
        ("add_broadcast", lambda a, b: ad.add(a, b), [(3, 4), (4,)], False),
        ("mul", lambda a, b: ad.mul(a, b), [(3, 4), (3, 1)], False),
        ("div", lambda a, b: ad.div(a, b), [(3, 2), (3, 2)], True),
        ("power", lambda a: ad.power(a, 2.5), [(4,)], True),
        ("matmul", lambda a, b: ad.matmul(a, b), [(3, 4), (4, 2)], False),
        ("matvec", lambda a, b: ad.matmul(a, b), [(3, 4), (4,)], False),
        ("transpose", lambda a: ad.mul(ad.transpose(a), np.arange(6.0).reshape(3, 2)), [(2, 3)], False),
        ("total_axis", lambda a: ad.square(ad.total(a, axis=1)), [(3, 4)], False),
        ("mean", lambda a: ad.square(ad.mean(a, axis=0)), [(3, 4)], False),
        ("getitem_repeat", lambda a: ad.square(ad.getitem(a, [0, 2, 2, 1])), [(3, 2)], False),
        ("concat", lambda a, b: ad.square(ad.concat([a, b], axis=1)), [(2, 3), (2, 1)], False),
        ("tanh", ad.tanh, [(5,)], False),
        ("sigmoid", ad.sigmoid, [(5,)], False),
        ("softplus", ad.softplus, [(5,)], False),
        ("exp", ad.exp, [(5,)], False),
        ("log", ad.log, [(5,)], True),
        ("square", ad.square, [(5,)], False),
        ("operators", lambda a, b: (a - b) * a / (b + 3.0) + (-a) @ np.ones((2, 2)), [(2, 2), (2, 2)], True),
    ],
)
def test_gradients(name, fn, shapes, positive):
    check(fn, *shapes, positive=positive)


def test_sparse_constant_matmul():
    m = sp.random(5, 4, density=0.5, random_state=0, format="csr")
    check(lambda x: ad.matmul(m, x), (4, 3))


def test_shared_subexpression_accumulates():
    x = ad.leaf(np.array([1.5, -2.0]))
    y = ad.mul(x, x)
    z = ad.total(ad.add(y, y))
    z.backward()
    np.testing.assert_allclose(x.grad, 4 * x.value)


def test_plain_arrays_stay_plain():
    out = ad.tanh(ad.matmul(np.eye(2), np.ones(2)))
    assert isinstance(out, np.ndarray)


def test_ndarray_left_operand_defers_to_tensor():
    x = ad.leaf(np.ones(3))
    out = np.full(3, 2.0) * x
    assert isinstance(out, ad.Tensor)


def test_clip_gradient_zero_outside():
    x = ad.leaf(np.array([-1.0, 0.5, 2.0]))
    ad.total(ad.clip(x, 0.0, 1.0)).backward()
    np.testing.assert_array_equal(x.grad, [0, 1, 0])


@settings(max_examples=30)
@given(st.floats(-700, 700))
def test_sigmoid_stable(v):
    s = ad.sigmoid(np.array([v]))
    assert np.isfinite(s).all() and 0 <= s[0] <= 1


def test_unknown_nonlinearity():
    with pytest.raises(ValidationError):
        ad.nonlinearity("swish")
