import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import conv2d_loops, convlstm_scalar
from tamperwatch.errors import (InternalConsistencyError, InvalidArgument, IngestError,
                                NumericFailure)
from tamperwatch.nn import checkpoint
from tamperwatch.nn.cell import CellState, ConvLstmCellParams, cell_backward, cell_forward
from tamperwatch.nn.conv import ConvKernel, conv2d_same, conv2d_same_backward, im2col
from tamperwatch.nn.gradcheck import gradient_check, sequence_mse_problem
from tamperwatch.nn.ops import hadamard, sigmoid, tanh_map
from tamperwatch.nn.optim import (AdamConfig, AdamState, clip_global_norm, optimizer_step)
from tamperwatch.seeding import make_rng


def random_cell(rng, cin, hid, k, h, w, scale=0.5):
    p = ConvLstmCellParams.zeros(cin, hid, k, h, w)
    for a in p.named().values():
        a[...] = rng.uniform(-scale, scale, a.shape)
    return p


# -- convolution --------------------------------------------------------------

def test_conv_degenerate_1x1():
    k = ConvKernel(np.array([[[[2.5]]]]), np.array([-0.75]))
    out = conv2d_same(np.array([[[3.0]]]), k)
    assert out.shape == (1, 1, 1)
    assert out[0, 0, 0] == 3.0 * 2.5 - 0.75


def test_conv_zero_padding_counts():
    k = ConvKernel(np.ones((1, 1, 3, 3)), np.zeros(1))
    out = conv2d_same(np.ones((1, 3, 3)), k)
    assert out[0, 1, 1] == 9
    assert out[0, 0, 0] == out[0, 0, 2] == out[0, 2, 0] == out[0, 2, 2] == 4
    assert out[0, 0, 1] == 6


def test_conv_matches_loop_reference_2x5x5():
    rng = make_rng(11)
    x = rng.normal(size=(2, 5, 5))
    k = ConvKernel(rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3))
    np.testing.assert_allclose(conv2d_same(x, k), conv2d_loops(x, k.weights, k.bias),
                               rtol=0, atol=1e-12)


def test_conv_matches_loop_reference_50_cases():
    rng = make_rng(12)
    for _ in range(50):
        cin, cout = rng.integers(1, 4, size=2)
        k = int(rng.choice([1, 3, 5]))
        h, w = rng.integers(1, 7, size=2)
        x = rng.normal(size=(cin, h, w))
        kern = ConvKernel(rng.normal(size=(cout, cin, k, k)), rng.normal(size=cout))
        np.testing.assert_allclose(conv2d_same(x, kern), conv2d_loops(x, kern.weights, kern.bias),
                                   rtol=0, atol=1e-12)


@pytest.mark.parametrize("k", [1, 3, 5, 7])
def test_conv_preserves_spatial_shape(k):
    x = np.ones((2, 6, 9))
    out = conv2d_same(x, ConvKernel(np.ones((4, 2, k, k)), np.zeros(4)))
    assert out.shape == (4, 6, 9)


def test_conv_shape_mismatch_names_both_shapes():
    k = ConvKernel(np.ones((1, 2, 3, 3)), np.zeros(1))
    with pytest.raises(InvalidArgument, match=r"\(3, 4, 4\).*\(1, 2, 3, 3\)"):
        conv2d_same(np.ones((3, 4, 4)), k)


def test_conv_rejects_even_kernel():
    with pytest.raises(InvalidArgument):
        ConvKernel(np.ones((1, 1, 2, 2)), np.zeros(1))


def test_conv_backward_is_adjoint():
    rng = make_rng(3)
    x = rng.normal(size=(3, 5, 6))
    w = rng.normal(size=(4, 3, 3, 3))
    d = rng.normal(size=(4, 5, 6))
    cols = im2col(x, 3)
    dw, db, dx = conv2d_same_backward(d, w, cols)
    lhs = np.sum(conv2d_same(x, ConvKernel(w, np.zeros(4))) * d)
    assert np.isclose(lhs, np.sum(x * dx), rtol=1e-12)
    assert np.isclose(lhs, np.sum(w * dw), rtol=1e-12)
    np.testing.assert_allclose(db, d.sum(axis=(1, 2)))


def test_conv_is_deterministic():
    rng = make_rng(4)
    x = rng.normal(size=(2, 8, 8))
    k = ConvKernel(rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3))
    assert conv2d_same(x, k).tobytes() == conv2d_same(x.copy(), k).tobytes()


# -- elementwise ---------------------------------------------------------------

def test_activation_fixed_points():
    assert sigmoid(np.zeros(1))[0] == 0.5
    assert tanh_map(np.zeros(1))[0] == 0.0


@given(st.floats(-30, 30))
def test_sigmoid_symmetry_and_range(v):
    x = np.array([v])
    s = sigmoid(x)[0]
    assert 0.0 < s < 1.0
    assert abs(s + sigmoid(-x)[0] - 1.0) < 1e-15
    assert abs(s - 1.0 / (1.0 + math.exp(-v))) < 1e-15
    assert -1.0 <= tanh_map(x)[0] <= 1.0


def test_hadamard_identities():
    rng = make_rng(5)
    a, b = rng.normal(size=(2, 3, 4, 4))
    np.testing.assert_array_equal(hadamard(a, np.ones_like(a)), a)
    np.testing.assert_array_equal(hadamard(a, b), hadamard(b, a))
    np.testing.assert_array_equal(hadamard(a, np.zeros_like(a)), np.zeros_like(a))
    with pytest.raises(InvalidArgument):
        hadamard(a, b[:2])


# -- cell forward ---------------------------------------------------------------

def test_cell_zero_params_half_gates():
    p = ConvLstmCellParams.zeros(2, 3, 3, 4, 5)
    x = make_rng(0).normal(size=(2, 4, 5))
    nxt, cache = cell_forward(x, CellState.zeros(3, 4, 5), p)
    for gate in (cache.i, cache.f, cache.o):
        np.testing.assert_array_equal(gate, 0.5)
    np.testing.assert_array_equal(nxt.c, 0.0)
    np.testing.assert_array_equal(nxt.h, 0.0)


def test_cell_saturated_forget_gate_carries_cell():
    p = ConvLstmCellParams.zeros(1, 2, 3, 3, 3)
    p.b[2:4] = 20.0
    c = make_rng(1).uniform(-1, 1, (2, 3, 3))
    nxt, _ = cell_forward(make_rng(2).normal(size=(1, 3, 3)), CellState(np.zeros((2, 3, 3)), c), p)
    np.testing.assert_allclose(nxt.c, c, atol=1e-8)
    np.testing.assert_allclose(nxt.c, c, atol=1e-6)


def test_cell_matches_scalar_oracle():
    rng = make_rng(7)
    for _ in range(20):
        p = random_cell(rng, 1, 2, 3, 2, 2)
        x = rng.normal(size=(1, 2, 2))
        prev = CellState(rng.normal(size=(2, 2, 2)), rng.normal(size=(2, 2, 2)))
        nxt, _ = cell_forward(x, prev, p)
        h, c = convlstm_scalar(x, prev.h, prev.c, *p.named().values())
        np.testing.assert_allclose(nxt.h, h, rtol=0, atol=1e-12)
        np.testing.assert_allclose(nxt.c, c, rtol=0, atol=1e-12)


@given(st.floats(-1e3, 1e3), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_gates_strictly_inside_unit_interval(scale, seed):
    rng = make_rng(seed)
    p = random_cell(rng, 1, 2, 3, 3, 3, scale=0.1)
    x = rng.uniform(-1, 1, (1, 3, 3)) * min(abs(scale), 20.0)
    _, cache = cell_forward(x, CellState.zeros(2, 3, 3), p)
    for gate in (cache.i, cache.f, cache.o):
        assert np.all((gate > 0) & (gate < 1))


def test_cell_shape_mismatch():
    p = ConvLstmCellParams.zeros(1, 2, 3, 4, 4)
    with pytest.raises(InvalidArgument):
        cell_forward(np.zeros((1, 4, 5)), CellState.zeros(2, 4, 4), p)
    with pytest.raises(InvalidArgument):
        cell_forward(np.zeros((2, 4, 4)), CellState.zeros(2, 4, 4), p)


def test_cell_params_invariants():
    with pytest.raises(InvalidArgument):
        ConvLstmCellParams(np.zeros((8, 1, 3, 3)), np.zeros((8, 3, 3, 3)), np.zeros(8),
                           np.zeros((2, 4, 4)), np.zeros((2, 4, 4)), np.zeros((2, 4, 4)))


# -- cell backward -----------------------------------------------------------------

def test_backward_zero_upstream_gives_zero_bundle():
    rng = make_rng(8)
    p = random_cell(rng, 1, 2, 3, 3, 3)
    _, cache = cell_forward(rng.normal(size=(1, 3, 3)),
                            CellState(rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3, 3))), p)
    z = np.zeros((2, 3, 3))
    grads, dx, prev = cell_backward(z, z, cache, p)
    for g in list(grads.values()) + [dx, prev.h, prev.c]:
        assert not np.any(g)


def test_backward_single_pixel_hand_derivation():
    """Scalar LSTM (1 channel, 1x1 map, k=1) with loss L = h_t."""
    rng = make_rng(9)
    p = random_cell(rng, 1, 1, 1, 1, 1, scale=0.9)
    xv, hv, cv = 0.7, -0.4, 0.3
    _, cache = cell_forward(np.full((1, 1, 1), xv),
                            CellState(np.full((1, 1, 1), hv), np.full((1, 1, 1), cv)), p)
    grads, dx, prev = cell_backward(np.ones((1, 1, 1)), np.zeros((1, 1, 1)), cache, p)

    wxi, wxf, wxc, wxo = p.wx.ravel()
    whi, whf, whc, who = p.wh.ravel()
    bi, bf, bc, bo = p.b
    wci, wcf, wco = p.wci.item(), p.wcf.item(), p.wco.item()
    sig = lambda v: 1 / (1 + math.exp(-v))
    i = sig(wxi * xv + whi * hv + wci * cv + bi)
    f = sig(wxf * xv + whf * hv + wcf * cv + bf)
    g = math.tanh(wxc * xv + whc * hv + bc)
    c = f * cv + i * g
    o = sig(wxo * xv + who * hv + wco * c + bo)
    tc = math.tanh(c)
    # dL/dc through both tanh(c) and the output-gate peephole
    dl_dc = o * (1 - tc ** 2) + tc * o * (1 - o) * wco
    di_pre = dl_dc * g * i * (1 - i)
    df_pre = dl_dc * cv * f * (1 - f)
    dg_pre = dl_dc * i * (1 - g ** 2)
    do_pre = tc * o * (1 - o)
    expect = {
        "b": [di_pre, df_pre, dg_pre, do_pre],
        "wx": [di_pre * xv, df_pre * xv, dg_pre * xv, do_pre * xv],
        "wh": [di_pre * hv, df_pre * hv, dg_pre * hv, do_pre * hv],
        "wci": [di_pre * cv], "wcf": [df_pre * cv], "wco": [do_pre * c],
    }
    for name, vals in expect.items():
        np.testing.assert_allclose(grads[name].ravel(), vals, rtol=0, atol=1e-12)
    dx_expect = di_pre * wxi + df_pre * wxf + dg_pre * wxc + do_pre * wxo
    dh_expect = di_pre * whi + df_pre * whf + dg_pre * whc + do_pre * who
    dc_expect = dl_dc * f + di_pre * wci + df_pre * wcf
    assert abs(dx.item() - dx_expect) < 1e-12
    assert abs(prev.h.item() - dh_expect) < 1e-12
    assert abs(prev.c.item() - dc_expect) < 1e-12


def test_backward_cache_mismatch():
    rng = make_rng(10)
    p = random_cell(rng, 1, 2, 3, 3, 3)
    other = random_cell(rng, 1, 3, 3, 3, 3)
    _, cache = cell_forward(np.zeros((1, 3, 3)), CellState.zeros(2, 3, 3), p)
    with pytest.raises(InternalConsistencyError):
        cell_backward(np.zeros((3, 3, 3)), np.zeros((3, 3, 3)), cache, other)


# -- gradient check -------------------------------------------------------------------

def test_gradient_check_quadratic_toy():
    params = {"w": np.array([[[[0.3]]]])}

    def f():
        w = params["w"][0, 0, 0, 0]
        return (w - 1.7) ** 2, {"w": np.array([[[[2 * (w - 1.7)]]]])}

    assert gradient_check(params, f) < 1e-8


def test_gradient_check_one_step():
    assert gradient_check(*sequence_mse_problem(0, timesteps=1, hidden=3)) < 1e-4


def test_gradient_check_two_steps():
    assert gradient_check(*sequence_mse_problem(0, timesteps=2, hidden=3)) < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_check_three_timesteps(seed):
    assert gradient_check(*sequence_mse_problem(seed, timesteps=3, hidden=4)) < 1e-4


def test_gradient_check_detects_wrong_gradient():
    assert gradient_check(*sequence_mse_problem(0, timesteps=1, hidden=2, grad_scale=1.01)) > 1e-3


def test_gradient_check_restores_params():
    params, f = sequence_mse_problem(1, timesteps=1, hidden=2)
    before = {k: v.copy() for k, v in params.items()}
    gradient_check(params, f)
    for k in params:
        assert params[k].tobytes() == before[k].tobytes()


def test_gradient_check_nonfinite_loss():
    params = {"w": np.zeros(2)}
    with pytest.raises(NumericFailure):
        gradient_check(params, lambda: (float("nan"), {"w": np.zeros(2)}))


def test_gradient_check_refuses_large_problems():
    params = {"w": np.zeros(5001)}
    with pytest.raises(InvalidArgument):
        gradient_check(params, lambda: (0.0, {"w": np.zeros(5001)}))


# -- optimizer ------------------------------------------------------------------------

def test_adam_zero_gradient_is_noop():
    p = {"a": np.array([1.0, -2.0])}
    state = AdamState()
    for _ in range(5):
        optimizer_step(p, {"a": np.zeros(2)}, state)
    np.testing.assert_array_equal(p["a"], [1.0, -2.0])


def test_adam_descends_against_constant_gradient():
    p = {"a": np.array([0.0, 0.0])}
    state = AdamState()
    for _ in range(50):
        optimizer_step(p, {"a": np.array([2.0, -0.5])}, state)
    assert p["a"][0] < 0 < p["a"][1]


def test_adam_quadratic_minimum():
    p = {"x": np.array([-2.0])}
    state = AdamState()
    hyper = AdamConfig(lr=0.1)
    for _ in range(200):
        optimizer_step(p, {"x": 2.0 * (p["x"] - 1.5)}, state, hyper)
    assert abs(p["x"][0] - 1.5) < 1e-3


def test_adam_rejects_nonfinite_gradient_naming_param():
    p = {"good": np.zeros(1), "bad": np.zeros(1)}
    with pytest.raises(NumericFailure, match="bad"):
        optimizer_step(p, {"good": np.zeros(1), "bad": np.array([np.inf])}, AdamState())


def test_clip_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_global_norm(g, 1.0) == 5.0
    assert np.isclose(np.hypot(g["a"][0], g["b"][0]), 1.0)
    g = {"a": np.array([0.3])}
    clip_global_norm(g, 1.0)
    assert g["a"][0] == 0.3


# -- checkpoint -----------------------------------------------------------------------

def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = make_rng(13)
    arrays = {"enc0.wx": rng.normal(size=(8, 1, 3, 3)), "b": rng.normal(size=5),
              "tiny": np.array([5e-324, -0.0, np.pi])}
    path = tmp_path / "m.cltm"
    checkpoint.save(path, arrays)
    raw = path.read_bytes()
    assert raw[:4] == b"CLTM" and raw[4] == 1
    back = checkpoint.load(path)
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].shape == arrays[k].shape
        assert back[k].tobytes() == arrays[k].tobytes()


def test_checkpoint_rejects_garbage():
    with pytest.raises(IngestError):
        checkpoint.loads(b"NOPE\x01\x00\x00\x00\x00")
    data = checkpoint.dumps({"a": np.ones(4)})
    with pytest.raises(IngestError):
        checkpoint.loads(data[:-3])
