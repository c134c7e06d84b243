import numpy as np
import pytest

from dualview.errors import DimensionError, NumericError, StateError
from dualview.tensor import Tensor, grad_enabled, no_grad


def test_sum_gradient_is_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_elementwise_square_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0])


def test_fanout_gradients_accumulate():
    x = Tensor([1.0, 1.0], requires_grad=True)
    y = x + x
    (y * y).sum().backward()
    # d/dx sum((2x)^2) = 8x
    np.testing.assert_allclose(x.grad, [8.0, 8.0])


def test_backward_without_forward_is_a_state_error():
    leaf = Tensor([1.0], requires_grad=True)
    with pytest.raises(StateError):
        leaf.backward()


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(DimensionError):
        (x * x).backward()


def test_nonfinite_leaf_rejected():
    with pytest.raises(NumericError):
        Tensor([1.0, np.inf])
    with pytest.raises(NumericError):
        Tensor([np.nan])


def test_shape_mismatch_rejected():
    with pytest.raises(DimensionError):
        Tensor(np.ones(3)) + Tensor(np.ones(4))


def test_dims_matches_data_length():
    t = Tensor(np.zeros((3, 4, 5)))
    assert t.dims == [3, 4, 5]
    assert np.prod(t.dims) == t.data.size


def test_no_grad_blocks_taping():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with no_grad():
        assert not grad_enabled()
        y = (x * x).sum()
    assert y._parents == ()
    with pytest.raises(StateError):
        y.backward()
    assert grad_enabled()


def test_scalar_multiplication_gradient():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    (x * 2.0).sum().backward()
    np.testing.assert_allclose(x.grad, [2.0, 2.0, 2.0])
