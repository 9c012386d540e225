import numpy as np
import pytest

from securenet import kernels
from securenet.ir.hlil import IRError
from securenet.porthos.reshape import reshape_filter, reshape_input, reshape_output


def direct_conv2d(x, y):
    m, f = x.shape[0], y.shape[0]
    q = m - f + 1
    out = np.zeros((q, q), dtype=x.dtype)
    for i in range(q):
        for j in range(q):
            out[i, j] = np.sum(x[i : i + f, j : j + f] * y)
    return out


def test_reshape_filter():
    y = np.array([[1, 2], [3, 4]])
    assert reshape_filter(y).tolist() == [[1], [2], [3], [4]]
    assert reshape_filter(np.array([[7]])).tolist() == [[7]]
    assert reshape_filter(np.arange(9).reshape(3, 3)).reshape(-1).tolist() == list(range(9))
    assert reshape_filter(np.zeros((2, 2, 3, 4))).shape == (12, 4)
    with pytest.raises(ValueError):
        reshape_filter(np.zeros((2, 3)))


def test_reshape_input_matches_displayed_example():
    x = np.arange(1, 10).reshape(3, 3)
    assert reshape_input(x, 2).tolist() == [[1, 2, 4, 5], [2, 3, 5, 6], [4, 5, 7, 8], [5, 6, 8, 9]]
    assert reshape_input(x, 3).tolist() == [list(range(1, 10))]
    with pytest.raises(ValueError):
        reshape_input(x, 4)


def test_reshape_output():
    assert reshape_output(np.array([1, 2, 3, 4])).tolist() == [[1, 2], [3, 4]]
    z = np.arange(9).reshape(3, 3)
    assert np.array_equal(reshape_output(z.reshape(-1, 1)), z)
    with pytest.raises(ValueError):
        reshape_output(np.arange(5))


def test_composition_is_convolution():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.integers(-9, 9, size=(6, 6))
        y = rng.integers(-9, 9, size=(3, 3))
        got = reshape_output(reshape_input(x, 3) @ reshape_filter(y))
        assert np.array_equal(got, direct_conv2d(x, y))
    x = np.arange(1, 10).reshape(3, 3)
    y = np.arange(1, 5).reshape(2, 2)
    assert reshape_output(reshape_input(x, 2) @ reshape_filter(y)).tolist() == [[37, 47], [67, 77]]


def test_im2col_multichannel_matches_loop():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 5, size=(2, 5, 6, 3))
    w = rng.integers(0, 5, size=(2, 3, 3, 4))
    got = kernels.im2col(x, 2, 3) @ kernels.filter_matrix(w)
    ref = np.zeros((2, 4, 4, 4), dtype=np.int64)
    for n in range(2):
        for i in range(4):
            for j in range(4):
                ref[n, i, j] = np.einsum("klc,klco->o", x[n, i : i + 2, j : j + 3], w)
    assert np.array_equal(got, ref)


def test_strided_and_same_padding():
    x = np.arange(1, 26).reshape(1, 5, 5, 1)
    w = np.ones((3, 3, 1, 1), dtype=np.int64)
    out = kernels.conv_operands(x, w.shape, {"strides": (2, 2), "padding": "SAME"}) @ kernels.filter_matrix(w)
    assert out.shape == (1, 3, 3, 1)
    assert out[0, 0, 0, 0] == 1 + 2 + 6 + 7
    assert out[0, 1, 1, 0] == x[0, 1:4, 1:4, 0].sum()


def test_pool_windows_order():
    x = np.arange(16).reshape(1, 4, 4, 1)
    win = kernels.pool_windows(x, {"pool": (2, 2)})
    assert win.shape == (1, 2, 2, 1, 4)
    assert win[0, 0, 0, 0].tolist() == [0, 1, 4, 5]
    assert win[0, 1, 1, 0].tolist() == [10, 11, 14, 15]


def test_library_ops():
    x = np.arange(6).reshape(1, 2, 3)
    assert kernels.library_op("Flatten", [np.zeros((5, 2, 3))], {}, 5).shape == (5, 6)
    assert kernels.library_op("Reshape", [np.zeros((4, 6))], {"shape": (1, 3, 2)}, 4).shape == (4, 3, 2)
    assert kernels.library_op("Pad", [x], {"pads": ((0, 0), (1, 0), (0, 0))}, 1).shape == (1, 3, 3)
    assert kernels.library_op("Transpose", [x], {"perm": (0, 2, 1)}, 1).shape == (1, 3, 2)
    assert kernels.library_op("Concat", [x, x], {"axis": 1}, 1).shape == (1, 4, 3)
    assert kernels.library_op("Squeeze", [np.zeros((1, 1, 3))], {"axes": (1,)}, 1).shape == (1, 3)
    assert kernels.library_op("BroadcastTo", [np.arange(3)], {"shape": (2, 3)}, 2).shape == (2, 3)
    with pytest.raises(IRError):
        kernels.library_op("ReLU", [x], {}, 1)
    assert kernels.runtime_shape((1, 5), 7) == (7, 5)
