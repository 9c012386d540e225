import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from securenet.fixedpoint import (
    FixedOverflow,
    fixed_accuracy,
    fixed_interpret,
    float_accuracy,
    float_interpret,
    fold_batchnorm,
    overflows,
    predictions,
    quantize_input,
    quantize_model,
    rho,
    scale_sweep,
    to_real,
)
from securenet.ir.lower import FixedConfig
from securenet.ir.modelio import model_from_parts

L = 1 << 64


def dot_model(w):
    graph = {
        "tensors": [{"name": "x", "dims": [1, 2]}, {"name": "w", "dims": [2, 1]}],
        "nodes": [{"op": "MatMul", "inputs": ["x", "w"], "output": "y"}],
        "input": "x",
        "output": "y",
    }
    return model_from_parts(graph, {"w": np.array(w, np.float32).reshape(2, 1)})[1]


def logistic_model(weights=None, scale_w=1.0):
    rng = np.random.default_rng(0)
    graph = {
        "tensors": [
            {"name": "x", "dims": [1, 784]},
            {"name": "W", "dims": [784, 10]},
            {"name": "b", "dims": [10]},
        ],
        "nodes": [
            {"op": "MatMul", "inputs": ["x", "W"], "output": "xW"},
            {"op": "MatAdd", "inputs": ["xW", "b"], "output": "logits"},
            {"op": "ArgMax", "inputs": ["logits"], "output": "label"},
        ],
        "input": "x",
        "output": "label",
    }
    weights = weights or {
        "W": (scale_w * rng.normal(size=(784, 10))).astype(np.float32),
        "b": rng.normal(size=10).astype(np.float32),
    }
    return model_from_parts(graph, weights)


def test_rho_values_from_the_worked_example():
    assert int(rho(np.float32(0.1), 24)) == 1677721
    assert int(rho(np.float32(400.1), 24)) == 6712564224
    assert int(rho(np.float32(0.3), 24)) == 5033165
    assert int(rho(np.float32(200.1), 24)) == 3357121024


def test_rho_uses_the_float32_value():
    # extended-precision oracle: the float32 nearest 0.3 is 0x3E99999A
    exact = np.float32(0.3).item()
    assert int(rho(0.3, 24)) == int(np.floor(exact * 2**24))


@pytest.mark.parametrize("s", [0, 1, 24, 63])
def test_rho_zero(s):
    assert int(rho(0.0, s)) == 0


def test_rho_negative_is_twos_complement_floor():
    assert int(rho(-1.5, 12)) == L - 6144
    assert int(rho(-1e-9, 4)) == L - 1  # floor, not truncation


def test_rho_overflow():
    with pytest.raises(FixedOverflow):
        rho(400.1, 60)
    assert overflows(400.1, 60) and not overflows(400.1, 24)
    rho(400.1, 60, on_overflow="wrap")  # no exception
    with pytest.raises(ValueError):
        rho(float("nan"), 3)


@settings(max_examples=300)
@given(st.floats(-1e6, 1e6, allow_nan=False, width=32), st.integers(0, 40))
def test_representation_error(r, s):
    # strict in exact arithmetic; float64 can round the gap up to the bound
    err = abs(np.float32(r).item() - to_real(rho(r, s), s).item())
    assert err <= 2.0**-s


def test_worked_dot_product():
    fm = quantize_model(dot_model([0.3, 0.1]), 24)
    x = quantize_input(np.array([[400.1, 200.1]], np.float32), 24)
    out = fixed_interpret(fm, x)
    assert int(out[0, 0]) == 2349481329
    assert to_real(out, 24)[0, 0] == 140.040000021457672119140625


def test_logistic_regression_lowering():
    prog, fm = logistic_model()
    assert [c.op for c in prog.calls] == ["MatMul", "MatAdd", "ArgMax"]
    fx = quantize_model(fm, 15)
    assert [c.op for c in fx.program.calls] == ["MatMul", "ScaleDown", "MatAdd", "ArgMax"]
    sd = fx.program.calls[1]
    assert sd.attrs["scale"] == 15 and sd.inputs == ("xW",)
    assert fx.program.calls[2].inputs[0] == sd.output


def test_identity_weight():
    graph = {
        "tensors": [{"name": "x", "dims": [1, 1]}, {"name": "w", "dims": [1, 1]}],
        "nodes": [{"op": "MatMul", "inputs": ["x", "w"], "output": "y"}],
        "input": "x",
        "output": "y",
    }
    _, fm = model_from_parts(graph, {"w": np.ones((1, 1), np.float32)})
    fx = quantize_model(fm, 12)
    assert int(fx.weights["w"][0, 0]) == 4096
    x = quantize_input(np.array([[2.5]]), 12)
    assert np.array_equal(fixed_interpret(fx, x), x)


def bn_model(gamma, beta, mean, var, eps=1e-3):
    graph = {
        "tensors": [{"name": "x", "dims": [1, 2, 2, 3]}]
        + [{"name": n, "dims": [3]} for n in ("g", "b", "m", "v")],
        "nodes": [{"op": "FusedBatchNorm", "inputs": ["x", "g", "b", "m", "v"], "output": "y",
                   "attrs": {"epsilon": eps}}],
        "input": "x",
        "output": "y",
    }
    arr = lambda v: np.full(3, v, np.float32)  # noqa: E731
    return model_from_parts(graph, {"g": arr(gamma), "b": arr(beta), "m": arr(mean), "v": arr(var)})[1]


def test_batchnorm_fold_identity():
    eps = 1e-3
    fx = quantize_model(bn_model(1.0, 0.0, 0.0, np.float32(1 - eps), eps), 10)
    (call, sd) = fx.program.calls
    assert call.op == "FusedBatchNorm" and sd.op == "ScaleDown"
    b_name, c_name = call.inputs[1:]
    assert fx.weights[b_name].tolist() == [1 << 10] * 3
    assert fx.weights[c_name].tolist() == [0] * 3
    assert not {"g", "b", "m", "v"} & set(fx.program.params)
    x = quantize_input(np.random.default_rng(0).normal(size=(1, 2, 2, 3)), 10)
    assert np.array_equal(fixed_interpret(fx, x), x)


def test_batchnorm_matches_float():
    fm = bn_model(2.0, 0.5, 0.25, 4.0)
    fx = quantize_model(fm, 16)
    x = np.random.default_rng(1).normal(size=(4, 2, 2, 3)).astype(np.float32)
    got = to_real(fixed_interpret(fx, quantize_input(x, 16)), 16)
    assert np.allclose(got, float_interpret(fm, x), atol=1e-3)


def test_fold_batchnorm_scales():
    b, c = fold_batchnorm([1.0], [1.0], [0.0], [1.0], 0.0, 8)
    assert b.tolist() == [256] and c.tolist() == [1 << 16]


def test_relu_and_maxpool_semantics():
    graph = {
        "tensors": [{"name": "x", "dims": [1, 2, 2, 1]}],
        "nodes": [
            {"op": "ReLU", "inputs": ["x"], "output": "r"},
            {"op": "MaxPool", "inputs": ["r"], "output": "p", "attrs": {"pool": [2, 2]}},
        ],
        "input": "x",
        "output": "p",
    }
    _, fm = model_from_parts(graph, {})
    fx = quantize_model(fm, 12)
    x = quantize_input(np.array([1, 2, 3, 4], np.float32).reshape(1, 2, 2, 1), 12)
    assert int(fixed_interpret(fx, x).reshape(-1)[0]) == 4 << 12
    neg = quantize_input(np.full((1, 2, 2, 1), -1.5, np.float32), 12)
    assert int(fixed_interpret(fx, neg).reshape(-1)[0]) == 0


def test_avgpool_public_reciprocal():
    graph = {
        "tensors": [{"name": "x", "dims": [1, 2, 2, 1]}],
        "nodes": [{"op": "AvgPool", "inputs": ["x"], "output": "a", "attrs": {"pool": [2, 2]}}],
        "input": "x",
        "output": "a",
    }
    _, fm = model_from_parts(graph, {})
    s = 12
    fx = quantize_model(fm, s)
    x = np.array([1, 2, 3, 5], np.float32).reshape(1, 2, 2, 1)
    got = to_real(fixed_interpret(fx, quantize_input(x, s)), s).item()
    assert abs(got - 2.75) <= 4 * 2.0**-s


def test_scale_zero_integer_model_is_plain_integer_evaluation():
    _, fm = logistic_model({"W": np.arange(7840, dtype=np.float32).reshape(784, 10) % 5,
                            "b": np.arange(10, dtype=np.float32)})
    fx = quantize_model(fm, 0)
    x = (np.arange(784) % 3).reshape(1, 784)
    logits_int = x @ (np.arange(7840).reshape(784, 10) % 5) + np.arange(10)
    assert fixed_interpret(fx, x.astype(np.uint64)).tolist() == [int(np.argmax(logits_int))]


def test_interpreter_is_deterministic(lenet_fixed, mnist_test):
    x = quantize_input(mnist_test[0][:20], 16)
    assert np.array_equal(fixed_interpret(lenet_fixed, x), fixed_interpret(lenet_fixed, x))


def test_record_hook_sees_every_call(lenet_fixed, mnist_test):
    seen = []
    fixed_interpret(lenet_fixed, quantize_input(mnist_test[0][:2], 16), record=lambda c, v: seen.append(c.op))
    assert seen == [c.op for c in lenet_fixed.program.calls]


def test_predictions_from_logits_and_labels():
    assert predictions(np.array([[1, 5, 2]], np.uint64)).tolist() == [1]
    neg = (np.array([[-3, -1]], np.int64)).view(np.uint64)
    assert predictions(neg).tolist() == [1]
    assert predictions(np.array([2, 0], np.uint64)).tolist() == [2, 0]
    assert predictions(np.array([[0.1, 0.9]])).tolist() == [1]


def single_neuron():
    graph = {
        "tensors": [{"name": "x", "dims": [1, 1]}, {"name": "w", "dims": [1, 2]}, {"name": "b", "dims": [2]}],
        "nodes": [
            {"op": "MatMul", "inputs": ["x", "w"], "output": "y"},
            {"op": "MatAdd", "inputs": ["y", "b"], "output": "z"},
            {"op": "ArgMax", "inputs": ["z"], "output": "label"},
        ],
        "input": "x",
        "output": "label",
    }
    # class 1 iff 400.1 x > 1.0, so the decision boundary sits at x = 1/400.1
    w = np.array([[0.0, 400.1]], np.float32)
    b = np.array([1.0, 0.0], np.float32)
    return model_from_parts(graph, {"w": w, "b": b})[1]


def test_sweep_single_neuron_prefers_mid_scales():
    fm = single_neuron()
    xs = np.array([1 / 400.1 * f for f in (0.9, 0.97, 1.03, 1.1, 0.5, 1.5)], np.float32).reshape(-1, 1)
    labels = (400.1 * xs.reshape(-1) > 1.0).astype(int)
    res = scale_sweep(fm, xs, labels)
    assert len(res.table) == 64
    assert res.best_accuracy == 1.0
    assert 8 <= res.best_scale <= 50
    assert res.table[2] < 1.0 and res.table[60] < 1.0


def test_sweep_zero_weights_ties_to_smallest_scale():
    _, fm = logistic_model({"W": np.zeros((784, 10), np.float32), "b": np.zeros(10, np.float32)})
    xs = np.random.default_rng(0).normal(size=(6, 784)).astype(np.float32)
    res = scale_sweep(fm, xs, np.arange(6) % 2, scales=range(8))
    assert len(set(res.table.values())) == 1
    assert res.best_scale == 0


def test_sweep_needs_data():
    with pytest.raises(ValueError):
        scale_sweep(single_neuron(), np.zeros((0, 1)), [])


def test_lenet_fixed_accuracy_close_to_float(lenet, mnist_val):
    images, labels = mnist_val
    f = float_accuracy(lenet[1], images, labels)
    res = scale_sweep(lenet[1], images, labels, scales=range(10, 22, 3))
    assert abs(res.best_accuracy - f) <= 0.01
    assert fixed_accuracy(quantize_model(lenet[1], res.best_scale), images, labels) == res.best_accuracy


def test_fixed_config_bounds():
    FixedConfig(0)
    FixedConfig(63)
    with pytest.raises(ValueError):
        FixedConfig(64)
    with pytest.raises(ValueError):
        FixedConfig(8, bits=32)


def test_quantize_reports_overflow():
    fx = quantize_model(dot_model([0.3, 0.1]), 62)
    assert fx.overflow == []
    fx = quantize_model(dot_model([3.0, 0.1]), 62)
    assert fx.overflow == ["w"]
    with pytest.raises(FixedOverflow):
        quantize_model(dot_model([3.0, 0.1]), 62, on_overflow="raise")
