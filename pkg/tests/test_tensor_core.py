import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bifas import kernels, ops
from bifas.gradcheck import gradcheck
from bifas.ops import ConvSpec
from bifas.tensor import ShapeError, Tensor, double_precision, no_grad

from oracles import conv2d_loops, maxpool2_loops

SEEDS = range(5)


def T(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad, dtype=np.float64)


# --- conv2d -----------------------------------------------------------------


def test_conv_identity_kernel():
    x = T(np.arange(9.0).reshape(1, 1, 3, 3))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1
    out = ops.conv2d(x, T(w), T([0.0]))
    np.testing.assert_array_equal(out.data, x.data)


def test_conv_all_ones_border_counts():
    out = ops.conv2d(T(np.ones((1, 1, 3, 3))), T(np.ones((1, 1, 3, 3))), T([0.0])).data[0, 0]
    assert out[1, 1] == 9
    assert out[0, 0] == out[0, 2] == out[2, 0] == out[2, 2] == 4
    assert out[0, 1] == 6


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("k", [1, 3, 5])
def test_conv_matches_loop_oracle(seed, k):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 3, 5, 5))
    w = rng.normal(size=(4, 3, k, k))
    b = rng.normal(size=4)
    out = ops.conv2d(T(x), T(w), T(b)).data
    np.testing.assert_allclose(out, conv2d_loops(x, w, b), atol=1e-5)


def test_conv_float32_matches_oracle():
    rng = np.random.default_rng(7)
    x, w, b = rng.normal(size=(2, 3, 5, 5)), rng.normal(size=(2, 3, 3, 3)), rng.normal(size=2)
    out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b))
    assert out.dtype == np.float32
    np.testing.assert_allclose(out.data, conv2d_loops(x, w, b), atol=1e-5)


def test_conv_shape_errors():
    x = T(np.zeros((1, 2, 4, 4)))
    with pytest.raises(ShapeError, match="channels"):
        ops.conv2d(x, T(np.zeros((1, 3, 3, 3))), T([0.0]))
    with pytest.raises(ShapeError, match="bias"):
        ops.conv2d(x, T(np.zeros((1, 2, 3, 3))), T([0.0, 0.0]))
    with pytest.raises(ShapeError):
        ops.conv2d(x, T(np.zeros((1, 2, 3, 3))), T([0.0]), spec=ConvSpec(2, 4))
    with pytest.raises(ShapeError):
        ops.conv2d(T(np.zeros((2, 4, 4))), T(np.zeros((1, 2, 3, 3))))


def test_convspec_padding():
    spec = ConvSpec(3, 8, kernel=5)
    assert spec.padding == 2 and spec.weight_shape == (8, 3, 5, 5)
    with pytest.raises(ValueError):
        ConvSpec(1, 1, kernel=4)


# --- maxpool2 ---------------------------------------------------------------


def test_maxpool_small():
    assert ops.maxpool2(T([[[[1, 2], [3, 4]]]])).data.item() == 4


def test_maxpool_constant():
    out = ops.maxpool2(T(np.full((1, 2, 4, 6), 2.5))).data
    assert out.shape == (1, 2, 2, 3)
    assert np.all(out == 2.5)


@pytest.mark.parametrize("seed", SEEDS)
def test_maxpool_matches_loop_oracle(seed):
    x = np.random.default_rng(seed).normal(size=(1, 1, 8, 8))
    np.testing.assert_array_equal(ops.maxpool2(T(x)).data, maxpool2_loops(x))


def test_maxpool_odd_rejected():
    with pytest.raises(ShapeError):
        ops.maxpool2(T(np.zeros((1, 1, 3, 4))))


def test_maxpool_tie_routes_to_first():
    x = T(np.ones((1, 1, 2, 2)), grad=True)
    ops.sum(ops.maxpool2(x)).backward()
    np.testing.assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])


@pytest.mark.parametrize("impl", ["numpy_impl", "numba_impl"])
def test_maxpool_backends_agree(impl):
    mod = getattr(kernels, impl)
    x = np.random.default_rng(3).integers(0, 3, size=(2, 3, 6, 6)).astype(np.float32)
    out, arg = mod.maxpool2_forward(x)
    np.testing.assert_array_equal(out, maxpool2_loops(x))
    g = np.random.default_rng(4).normal(size=out.shape).astype(np.float32)
    ref = kernels.numpy_impl.maxpool2_backward(g, kernels.numpy_impl.maxpool2_forward(x)[1])
    np.testing.assert_array_equal(mod.maxpool2_backward(g, arg), ref)


# --- nonlinearities -------------------------------------------------------


def test_relu_values():
    np.testing.assert_array_equal(ops.relu(T([-1.0, 2.0])).data, [0.0, 2.0])


def test_sigmoid_zero():
    assert ops.sigmoid(T([0.0])).data[0] == 0.5


def test_sigmoid_extremes_finite():
    y = ops.sigmoid(T([-800.0, 800.0])).data
    assert y[0] == 0.0 and y[1] == 1.0


def test_softmax_equal_logits():
    out = ops.softmax_channel(T(np.zeros((1, 25, 2, 2)))).data
    np.testing.assert_allclose(out, 1 / 25, rtol=0, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 5.0))
def test_softmax_is_positive_distribution(seed, spread):
    # logit gaps stay well inside the float32 exp range
    x = np.random.default_rng(seed).normal(size=(2, 9, 3, 3)) * spread
    y = ops.softmax_channel(Tensor(x)).data
    assert np.all(y > 0)
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-6)


# --- backward ---------------------------------------------------------------


def test_backward_sum_gives_ones():
    x = T(np.arange(6.0).reshape(2, 3), grad=True)
    ops.sum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_square():
    x = T([3.0], grad=True)
    ops.sum(x * x).backward()
    assert x.grad[0] == 6.0


def test_backward_rejects_non_scalar():
    x = T(np.ones(3), grad=True)
    with pytest.raises(ShapeError):
        ops.relu(x).backward()


def test_gradient_accumulates_over_reuse():
    rng = np.random.default_rng(0)
    xv = rng.normal(size=(1, 2, 4, 4))
    w1 = T(rng.normal(size=(2, 2, 3, 3)))
    w2 = T(rng.normal(size=(2, 2, 3, 3)))

    def single(w):
        x = T(xv, grad=True)
        ops.sum(ops.relu(ops.conv2d(x, w))).backward()
        return x.grad

    x = T(xv, grad=True)
    total = ops.add(ops.sum(ops.relu(ops.conv2d(x, w1))), ops.sum(ops.relu(ops.conv2d(x, w2))))
    total.backward()
    np.testing.assert_array_equal(x.grad, single(w1) + single(w2))


def test_intermediate_grads_populated():
    x = T([1.0, -2.0, 3.0], grad=True)
    h = ops.relu(x)
    ops.sum(h * h).backward()
    np.testing.assert_array_equal(h.grad, 2 * h.data)


def test_no_grad_records_nothing():
    x = T([1.0], grad=True)
    with no_grad():
        y = ops.relu(x)
    assert not y.requires_grad and y._parents == ()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_forward_is_an_error():
    with pytest.raises(FloatingPointError):
        ops.mul(T([np.inf]), T([0.0]))


def test_composite_graph_vs_finite_differences():
    rng = np.random.default_rng(1)
    # keep pre-activations away from the relu kink
    x = T(rng.uniform(0.5, 1.5, size=(1, 2, 5, 5)))
    w = T(np.abs(rng.normal(size=(3, 2, 3, 3))) + 0.1)
    b = T(rng.normal(size=3))
    err = gradcheck(lambda x_, w_, b_: ops.mean(ops.relu(ops.conv2d(x_, w_, b_))), [x, w, b])
    assert err < 1e-3


# --- gradcheck itself -------------------------------------------------------


def test_gradcheck_linear_is_exact():
    x = T(np.random.default_rng(0).normal(size=(3, 4)))
    c = np.random.default_rng(1).normal(size=(3, 4))
    err = gradcheck(lambda t: ops.sum(ops.mul(t, c)), x)
    assert err < 1e-9


def test_gradcheck_conv_parameters():
    rng = np.random.default_rng(2)
    x = T(rng.normal(size=(2, 3, 5, 5)))
    w = T(rng.normal(size=(4, 3, 3, 3)))
    b = T(rng.normal(size=4))
    probe = rng.normal(size=(2, 4, 5, 5))
    err = gradcheck(lambda w_, b_: ops.sum(ops.mul(ops.conv2d(x, w_, b_), probe)), [w, b], eps=1e-4)
    assert err < 1e-4


def test_gradcheck_relu_away_from_kink():
    rng = np.random.default_rng(3)
    v = rng.uniform(0.1, 1.0, size=20) * rng.choice([-1, 1], size=20)
    probe = rng.normal(size=20)
    assert gradcheck(lambda t: ops.sum(ops.mul(ops.relu(t), probe)), T(v)) < 1e-6


@pytest.mark.parametrize("name,fn", [
    ("sigmoid", ops.sigmoid),
    ("softmax", ops.softmax_channel),
    ("maxpool", ops.maxpool2),
    ("avgpool", lambda t: ops.avgpool(t, 2)),
    ("concat", lambda t: ops.concat_channels([t, ops.sigmoid(t)])),
])
def test_gradcheck_ops(name, fn):
    rng = np.random.default_rng(4)
    x = T(rng.permutation(2 * 3 * 4 * 4).reshape(2, 3, 4, 4) / 10.0)  # distinct values: no maxpool ties
    with double_precision():
        probe = rng.normal(size=fn(T(x.data)).shape)
    assert gradcheck(lambda t: ops.sum(ops.mul(fn(t), probe)), x) < 1e-3


def test_gradcheck_rejects_non_scalar():
    with pytest.raises(ValueError):
        gradcheck(lambda t: ops.relu(t), T(np.ones(3)))


def test_broadcast_gradients():
    a = T(np.ones((2, 3)), grad=True)
    b = T(np.full((1, 3), 2.0), grad=True)
    ops.sum(ops.mul(a, b)).backward()
    np.testing.assert_array_equal(b.grad, [[2.0, 2.0, 2.0]])
    np.testing.assert_array_equal(a.grad, np.full((2, 3), 2.0))


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("", "numba")])
def test_backend_env_flag(flag, expected):
    env = dict(os.environ, BIFAS_DISABLE_NUMBA=flag)
    code = "from bifas import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_numpy_backend_runs_tiny_model():
    code = (
        "import numpy as np\n"
        "from bifas import model, kernels\n"
        "from bifas.config import tiny_model_config\n"
        "from bifas.tensor import Tensor\n"
        "assert kernels.BACKEND == 'numpy'\n"
        "cfg = tiny_model_config(input_size=32, width=4)\n"
        "out = model.forward(model.init_params(cfg), cfg, Tensor(np.random.default_rng(0).random((1, 3, 32, 32))))\n"
        "print(out.depth.shape)\n"
    )
    env = dict(os.environ, BIFAS_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "(1, 1, 4, 4)"
