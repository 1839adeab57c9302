import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmretarget.autodiff import AdamState, Tape, Tensor, adam_step, check_gradients, ops
from nmretarget.autodiff.gradcheck import primitive_cases, relative_error
from nmretarget.errors import AlreadyConsumed, NotScalar, ShapeMismatch


def test_sum_of_squares_gradient():
    tape = Tape()
    x = tape.variable([1.0, 2.0, 3.0])
    tape.backward(ops.sum(ops.mul(x, x)))
    np.testing.assert_array_equal(x.grad, [2, 4, 6])


def test_non_scalar_loss():
    tape = Tape()
    x = tape.variable([1.0, 2.0])
    with pytest.raises(NotScalar):
        tape.backward(x * 2)


def test_tape_consumed():
    tape = Tape()
    x = tape.variable([1.0, 2.0])
    loss = ops.sum(x)
    tape.backward(loss)
    with pytest.raises(AlreadyConsumed):
        tape.backward(loss)
    with pytest.raises(AlreadyConsumed):
        ops.sum(x * 3)


def test_unused_leaf_gets_zeros():
    tape = Tape()
    x = tape.variable([1.0, 2.0])
    y = tape.variable(np.ones((2, 2)))
    tape.backward(ops.sum(x))
    np.testing.assert_array_equal(y.grad, np.zeros((2, 2)))


def test_no_hidden_aliasing():
    buf = np.array([1.0, 2.0, 3.0])
    tape = Tape()
    x = tape.variable(buf)
    y = ops.mul(x, x)
    buf[:] = 100.0
    np.testing.assert_array_equal(y.data, [1, 4, 9])
    tape.backward(ops.sum(y))
    np.testing.assert_array_equal(x.grad, [2, 4, 6])
    with pytest.raises(ValueError):
        y.data[0] = 5.0


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 3))))
    with pytest.raises(ShapeMismatch):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_conv1d_zero_padding_example():
    x = Tensor(np.array([[1.0, 0, 0, 0, 1]]))
    w = Tensor(np.array([[[1.0, 1.0]]]))
    out = ops.conv1d(x, w, padding="zero", pad=0)
    np.testing.assert_array_equal(out.data, [[1, 0, 0, 1]])


def test_conv1d_matches_direct_loop(rng):
    x = rng.standard_normal((2, 3, 11))
    w = rng.standard_normal((4, 3, 5))
    b = rng.standard_normal(4)
    for mode, np_mode in (("reflect", "reflect"), ("zero", "constant"), ("replicate", "edge")):
        for stride in (1, 2):
            got = ops.conv1d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=mode).data
            xp = np.pad(x, ((0, 0), (0, 0), (2, 2)), mode=np_mode)
            t_out = (11 + 4 - 5) // stride + 1
            want = np.zeros((2, 4, t_out))
            for n in range(2):
                for o in range(4):
                    for t in range(t_out):
                        want[n, o, t] = np.sum(xp[n, :, t * stride:t * stride + 5] * w[o]) + b[o]
            np.testing.assert_allclose(got, want, atol=1e-12)


def test_conv1d_constant_input_constant_output():
    x = Tensor(np.full((2, 16), 3.0))
    w = Tensor(np.random.default_rng(0).standard_normal((3, 2, 15)))
    out = ops.conv1d(x, w).data
    assert np.allclose(out, out[:, :1], atol=1e-12)


def test_upsample_linear():
    out = ops.upsample1d(Tensor(np.array([[0.0, 1.0, 2.0]])), 2).data
    np.testing.assert_allclose(out, [[0, 0.25, 0.75, 1.25, 1.75, 2.0]])


def test_primitives_gradcheck(rng):
    for _ in range(5):
        for name, fn, inputs in primitive_cases(rng):
            result = check_gradients(fn, inputs, tol=1e-4, name=name, max_coords=8, rng=rng)
            assert result.passed, str(result)


def test_composite_conv_leaky_mean(rng):
    x = rng.standard_normal((2, 12))
    w = rng.standard_normal((3, 2, 5))

    def fn(a, b):
        return ops.mean(ops.leaky_relu(ops.conv1d(a, b), 0.2))
    assert check_gradients(fn, [x, w], tol=1e-4).passed


def test_relative_error_floor():
    assert relative_error(1e-9, 2e-9) < 1e-2
    assert relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)


def test_replay_determinism(rng):
    x = rng.standard_normal((3, 10))
    w = rng.standard_normal((2, 3, 3))

    def run():
        tape = Tape()
        a, b = tape.variable(x), tape.variable(w)
        loss = ops.sum(ops.tanh(ops.conv1d(a, b)))
        tape.backward(loss)
        return loss.data.tobytes(), a.grad.tobytes(), b.grad.tobytes()
    assert run() == run()


# --- Adam ---

def test_adam_first_step_magnitude():
    lr = 1e-3
    new, state = adam_step({"w": np.array([0.0])}, {"w": np.array([1.0])}, AdamState(), lr)
    assert 0.99 * lr <= abs(new["w"][0]) <= lr
    assert state.step == 1


def test_adam_zero_gradient():
    state = AdamState()
    new, state = adam_step({"w": np.array([2.0])}, {"w": np.array([0.0])}, state, 0.1)
    assert new["w"][0] == 2.0


def test_adam_moments_decay():
    new, state = adam_step({"w": np.array([0.0])}, {"w": np.array([1.0])}, AdamState(), 0.1)
    _, state2 = adam_step(new, {"w": np.array([0.0])}, state, 0.1)
    assert state2.m["w"][0] == pytest.approx(0.9 * state.m["w"][0])
    assert state2.v["w"][0] == pytest.approx(0.999 * state.v["w"][0])


def test_adam_scalar_descent():
    params, state = {"w": np.array(0.0)}, AdamState()
    for _ in range(200):
        grads = {"w": 2 * (params["w"] - 3.0)}
        params, state = adam_step(params, grads, state, 0.1)
    assert abs(params["w"] - 3.0) < 0.05


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, AdamState(), 0.1)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_broadcast_add_gradcheck(n, m, seed):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((n, m)), r.standard_normal((m,))
    w = r.standard_normal((n, m))

    def fn(x, y):
        return ops.sum(ops.mul(ops.add(x, y), w))
    assert check_gradients(fn, [a, b]).passed
