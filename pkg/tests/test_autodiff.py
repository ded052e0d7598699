import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lidarhmp import autodiff as ad
from lidarhmp.autodiff import Params, Tensor
from lidarhmp.autodiff.suite import PRIMITIVES, primitive_suite


def leaf(x):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


def test_primitive_suite_within_tolerance():
    report = primitive_suite(instances=5, seed=1)
    assert set(report) == set(PRIMITIVES)
    assert max(report.values()) <= 1e-5, report


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_matmul_grad_random_shapes(n, k, m, seed):
    rng = np.random.default_rng(seed)
    a, b = leaf(rng.normal(size=(2, n, k))), leaf(rng.normal(size=(k, m)))
    w = rng.normal(size=(2, n, m))
    assert ad.grad_check(lambda: ad.sum_(ad.mul(ad.matmul(a, b), w)), [a, b]) <= 1e-6


def test_backward_accumulates_shared_use():
    x = leaf([1.0, 2.0])
    ad.sum_(ad.add(ad.mul(x, x), x)).backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_masked_max_empty_slice_is_zero_without_nan():
    x = leaf([[3.0, -1.0], [5.0, 7.0]])
    mask = np.array([[False, False], [True, False]])
    y = ad.max_(x, axis=1, mask=mask)
    np.testing.assert_array_equal(y.data, [0.0, 5.0])
    ad.sum_(y).backward()
    np.testing.assert_array_equal(x.grad, [[0, 0], [1, 0]])
    assert np.isfinite(x.grad).all()


def test_max_tie_goes_to_first_index():
    x = leaf([2.0, 2.0, 1.0])
    ad.max_(x, axis=0).backward()
    np.testing.assert_array_equal(x.grad, [1, 0, 0])


def test_shape_errors():
    with pytest.raises(ad.ShapeError):
        ad.add(leaf(np.ones((2, 3))), leaf(np.ones((4, 3))))
    with pytest.raises(ad.ShapeError):
        ad.matmul(leaf(np.ones((2, 3))), leaf(np.ones((2, 3))))


def test_grad_shape_matches_data():
    x = leaf(np.ones((3, 1)))
    y = leaf(np.ones((1, 4)))
    ad.sum_(ad.mul(x, y)).backward()
    assert x.grad.shape == x.shape and y.grad.shape == y.shape


def test_no_grad_records_nothing():
    x = leaf([1.0])
    with ad.no_grad():
        y = ad.mul(x, 2.0)
    assert not y.requires_grad


def test_softmax_rows_sum_to_one_for_large_inputs():
    s = ad.softmax(leaf([[1000.0, 1001.0, -1000.0]]))
    assert np.isfinite(s.data).all() and s.data.sum() == pytest.approx(1.0)


def _adam_reference(p0, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    p, m, v = p0.copy(), 0 * p0, 0 * p0
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def test_adam_matches_reference():
    rng = np.random.default_rng(0)
    params = Params(np.float64)
    p = params.add("w", rng.normal(size=5))
    start = p.data.copy()
    grads = [rng.normal(size=5) for _ in range(4)]
    state = ad.AdamState(lr=0.01)
    for g in grads:
        p.grad = g
        ad.adam_step(params, state)
    np.testing.assert_allclose(p.data, _adam_reference(start, grads, 0.01), rtol=1e-12)
    assert state.step == 4


def test_adam_first_step_moves_by_lr():
    params = Params(np.float64)
    p = params.add("w", np.zeros(3))
    p.grad = np.array([5.0, -0.1, 2.0])
    ad.adam_step(params, ad.AdamState(lr=0.1))
    np.testing.assert_allclose(p.data, [-0.1, 0.1, -0.1], rtol=1e-6)


def test_adam_rejects_nan_without_touching_params():
    params = Params(np.float64)
    a, b = params.add("a", np.ones(2)), params.add("b", np.ones(2))
    a.grad, b.grad = np.ones(2), np.array([np.nan, 0.0])
    with pytest.raises(ad.TrainingDivergence, match="'b'"):
        ad.adam_step(params, ad.AdamState(lr=0.1))
    np.testing.assert_array_equal(a.data, 1.0)


def test_params_reject_duplicates():
    p = Params()
    p.add("x", np.zeros(1))
    with pytest.raises(KeyError):
        p.add("x", np.zeros(1))


def test_rel_error_floor():
    assert ad.rel_error(np.zeros(3), np.zeros(3)) == 0.0
    assert ad.rel_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)
