"""Central finite-difference gradient checking.

``check_gradients`` compares tape gradients of a scalar function against
``(f(x + h e_i) - f(x - h e_i)) / 2h`` coordinate by coordinate, and
optionally along random directions when the input is too large to sweep.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Tape, Tensor


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: max rel err {self.max_rel_error:.2e} "
                f"over {self.checked} checks (tol {self.tolerance:g})")


def relative_error(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def _evaluate(fn, arrays):
    out = fn(*[Tensor(a) for a in arrays])
    return float(out.data)


def analytic_gradients(fn, inputs):
    tape = Tape()
    tensors = [tape.variable(x) for x in inputs]
    loss = fn(*tensors)
    tape.backward(loss)
    return [t.grad for t in tensors]


def check_gradients(fn, inputs, h=1e-5, tol=1e-4, max_coords=None, directions=0,
                    rng=None, name="", floor=1e-6):
    """Check ``fn`` (tensors -> 0-d tensor) at ``inputs`` (numpy arrays).

    ``max_coords`` caps the number of coordinates probed per input (chosen
    at random with ``rng``); ``directions`` adds that many random-direction
    checks over all inputs jointly.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    grads = analytic_gradients(fn, inputs)
    worst = 0.0
    checked = 0
    for k, x in enumerate(inputs):
        flat_idx = np.arange(x.size)
        if max_coords is not None and x.size > max_coords:
            flat_idx = rng.choice(x.size, size=max_coords, replace=False)
        for i in flat_idx:
            pert = list(inputs)
            xp = x.copy().reshape(-1)
            xp[i] += h
            pert[k] = xp.reshape(x.shape)
            fp = _evaluate(fn, pert)
            xp[i] -= 2 * h
            pert[k] = xp.reshape(x.shape)
            fm = _evaluate(fn, pert)
            num = (fp - fm) / (2 * h)
            worst = max(worst, float(relative_error(grads[k].reshape(-1)[i], num, floor)))
            checked += 1
    for _ in range(directions):
        dirs = [rng.standard_normal(x.shape) for x in inputs]
        norm = np.sqrt(sum(float(np.sum(d * d)) for d in dirs))
        dirs = [d / norm for d in dirs]
        fp = _evaluate(fn, [x + h * d for x, d in zip(inputs, dirs)])
        fm = _evaluate(fn, [x - h * d for x, d in zip(inputs, dirs)])
        num = (fp - fm) / (2 * h)
        ana = sum(float(np.sum(g * d)) for g, d in zip(grads, dirs))
        worst = max(worst, float(relative_error(ana, num, floor)))
        checked += 1
    return GradCheckResult(name, worst, checked, tol)


# --- primitive cases ---------------------------------------------------------------

def _away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin + x, x)


def primitive_cases(rng):
    """Yield ``(name, fn, inputs)`` for one random draw of every primitive.

    Each ``fn`` reduces the op's output to a scalar with fixed random
    weights so every output coordinate contributes.
    """
    def weighted(shape):
        w = rng.standard_normal(shape)
        return lambda y: ops.sum(ops.mul(y, w))

    r = lambda *s: tuple(int(v) for v in s)  # noqa: E731
    n, m, k = r(*rng.integers(1, 5, size=3))

    a, b = rng.standard_normal((n, m)), rng.standard_normal((n, m))
    red = weighted((n, m))
    yield "add", lambda x, y: red(ops.add(x, y)), [a, b]
    yield "sub", lambda x, y: red(ops.sub(x, y)), [a, b]
    yield "mul", lambda x, y: red(ops.mul(x, y)), [a, b]
    lead = rng.standard_normal((m,))
    yield "add_broadcast", lambda x, y: red(ops.add(x, y)), [a, lead]
    far = b + np.where(b >= a, 0.1, -0.1)
    yield "minimum", lambda x, y: red(ops.minimum(x, y)), [a, far]
    yield "square", lambda x: red(ops.square(x)), [a]
    yield "tanh", lambda x: red(ops.tanh(x)), [a]
    yield "leaky_relu", lambda x: red(ops.leaky_relu(x, 0.2)), [_away_from_zero(rng, (n, m))]
    yield "sum", lambda x: ops.sum(x), [a]
    red_ax = weighted((m,))
    yield "sum_axis", lambda x: red_ax(ops.sum(x, axis=0)), [a]
    yield "mean", lambda x: red_ax(ops.mean(x, axis=0)), [a]

    c = rng.standard_normal((m, k))
    red_mm = weighted((n, k))
    yield "matmul", lambda x, y: red_mm(ops.matmul(x, y)), [a, c]
    batch = rng.standard_normal((2, n, m))
    red_bmm = weighted((2, n, k))
    yield "matmul_batched", lambda x, y: red_bmm(ops.matmul(x, y)), [batch, c]

    red_cat = weighted((2 * n, m))
    yield "concat", lambda x, y: red_cat(ops.concat([x, y], axis=0)), [a, b]
    red_stack = weighted((n, 2, m))
    yield "stack", lambda x, y: red_stack(ops.stack([x, y], axis=1)), [a, b]
    red_sl = weighted((n, max(m - 1, 1)))
    sl = np.s_[:, 1:] if m > 1 else np.s_[:, :1]
    yield "slice", lambda x: red_sl(ops.slice(x, sl)), [a]
    red_bc = weighted((3, n, m))
    yield "broadcast", lambda x: red_bc(ops.broadcast(x, (3, n, m))), [a]
    red_rs = weighted((n * m,))
    yield "reshape", lambda x: red_rs(ops.reshape(x, (n * m,))), [a]
    red_tr = weighted((m, n))
    yield "transpose", lambda x: red_tr(ops.transpose(x)), [a]
    q = rng.standard_normal((n, 4)) + np.array([2.0, 0, 0, 0])
    red_q = weighted((n, 4))
    yield "normalize_l2", lambda x: red_q(ops.normalize_l2(x)), [q]

    c_in, c_out, kk = r(*rng.integers(1, 4, size=3))
    kk = 2 * kk + 1
    t = int(rng.integers(kk + 1, kk + 8))
    stride = int(rng.integers(1, 3))
    xs = rng.standard_normal((2, c_in, t))
    ws = rng.standard_normal((c_out, c_in, kk))
    bs = rng.standard_normal(c_out)
    for mode in ("reflect", "zero"):
        t_out = (t + 2 * (kk // 2) - kk) // stride + 1
        red_c = weighted((2, c_out, t_out))
        yield (f"conv1d_{mode}",
               lambda x, w, bb, mode=mode, red_c=red_c: red_c(
                   ops.conv1d(x, w, bb, stride=stride, padding=mode)),
               [xs, ws, bs])
    red_up = weighted((2, c_in, 2 * t))
    yield "upsample1d", lambda x: red_up(ops.upsample1d(x, 2)), [xs]

    qa, qb = rng.standard_normal((n, 4)), rng.standard_normal((n, 4))
    yield "quat_mul", lambda x, y: red_q(ops.quat_mul(x, y)), [qa, qb]
    v = rng.standard_normal((n, 3))
    red_v = weighted((n, 3))
    yield "quat_rotate", lambda x, y: red_v(ops.quat_rotate(x, y)), [qa, v]
